//! On-disk run state: versioned JSON bundles for torus solutions, written
//! atomically (temp file + rename) so an interrupted run never leaves a
//! truncated file behind.
//!
//! Serialization goes through `serde_json` with struct-order keys and
//! shortest-round-trip floats, so identical solutions produce byte-identical
//! files — resumability and determinism checks compare bytes, not numbers.

use crate::error::{Error, Result};
use crate::kam::TorusSolution;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

/// Tag identifying a torus state file.
pub const STATE_FORMAT: &str = "wkam-state";
/// Version string stamped into every artifact this crate writes.
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// A torus solution as stored on disk, wrapped with enough provenance to
/// recognize foreign or stale files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateFile {
    pub format: String,
    pub version: String,
    pub solution: TorusSolution,
}

impl StateFile {
    pub fn new(solution: TorusSolution) -> StateFile {
        StateFile {
            format: STATE_FORMAT.into(),
            version: ARTIFACT_VERSION.into(),
            solution,
        }
    }
}

/// Write `bytes` to `path` atomically: the data lands under a temporary
/// name in the same directory and is renamed over the target, so readers
/// see either the old file or the new one, never a prefix.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Serialize a solution into a state file at `path`.
pub fn save_solution(path: &Path, solution: &TorusSolution) -> Result<()> {
    let state = StateFile::new(solution.clone());
    let mut text = serde_json::to_string_pretty(&state)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Load a solution from a state file, rejecting files that are not ours.
pub fn load_solution(path: &Path) -> Result<TorusSolution> {
    let text = fs::read_to_string(path)?;
    let state: StateFile = serde_json::from_str(&text)?;
    if state.format != STATE_FORMAT {
        return Err(Error::Format {
            context: format!(
                "{} declares format {:?}, expected {STATE_FORMAT:?}",
                path.display(),
                state.format
            ),
        });
    }
    Ok(state.solution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohomology::golden_mean;
    use crate::models::KickedFamily;
    use crate::splitting::product_splitting;

    fn sample_solution() -> TorusSolution {
        let family = KickedFamily::frozen(0.9, 1.5, 0.0);
        let (k, mu) = family.exact_seed(golden_mean(), 0.0, 8).unwrap();
        let splitting = product_splitting(&family).unwrap();
        TorusSolution::from_seed(k, mu, 0.0, splitting)
    }

    #[test]
    fn state_files_round_trip_bit_for_bit() {
        let dir = std::env::temp_dir().join("wkam-state-roundtrip");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("torus.json");
        let sol = sample_solution();
        save_solution(&path, &sol).unwrap();
        let back = load_solution(&path).unwrap();
        assert_eq!(back.eps, sol.eps);
        assert_eq!(back.mu, sol.mu);
        assert_eq!(back.k.sub(&sol.k).unwrap().norm_rho(0.0), 0.0);

        // saving the loaded solution reproduces the file exactly
        let twin = dir.join("torus-twin.json");
        save_solution(&twin, &back).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&twin).unwrap());
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn foreign_files_are_rejected_by_format_tag() {
        let dir = std::env::temp_dir().join("wkam-state-foreign");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("other.json");
        fs::write(&path, r#"{"format": "not-ours", "version": "0", "solution": null}"#).unwrap();
        assert!(load_solution(&path).is_err());
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn atomic_writes_leave_no_temp_files() {
        let dir = std::env::temp_dir().join("wkam-state-atomic");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("data.json");
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"second");
        let leftovers: Vec<_> = fs::read_dir(&dir)
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().contains("tmp"))
            .collect();
        assert!(leftovers.is_empty(), "temp files left behind: {leftovers:?}");
        fs::remove_dir_all(&dir).unwrap();
    }
}
