//! Run configuration: one flat JSON file drives every subcommand.
//!
//! Unknown keys are rejected so typos fail loudly, and every omitted key is
//! materialized with its default before anything is computed, so the config
//! written next to the outputs is complete and re-runnable as-is.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use wkam::cohomology::DiophantineData;
use wkam::fourier::RVec;
use wkam::kam::{TorusSolution, DEFAULT_L0};
use wkam::lindstedt::DomainScanSpec;
use wkam::models::KickedFamily;
use wkam::splitting::product_splitting;

/// The map family block.  `lambda` is the only key without a default: a
/// config that does not commit to a conformal factor is not a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    /// Conformal factor of the map (frozen, eps-independent).
    pub lambda: f64,
    /// Hyperbolic kick strength on the whiskered plane.
    #[serde(default = "default_c")]
    pub c: f64,
    /// Rotational kick strength baked into the family.
    #[serde(default = "default_eps_c")]
    pub eps_c: f64,
    /// Coupling strength the solve targets.
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Factor that `verify` checks the Jacobians against.  Defaults to
    /// `lambda`; declaring a different value here is how a stale or corrupted
    /// config gets caught.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_lambda: Option<f64>,
}

/// Raster parameters for `scan`.  The factor model scanned is the power law
/// `lambda(eps) = 1 + alpha eps^a`, independent of the frozen `family.lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    pub alpha: f64,
    pub a: u32,
    /// Disk radius; the raster covers `[-r0, r0]^2`.  Zero is allowed and
    /// produces an empty raster.
    pub r0: f64,
    /// Cells per axis (min 64).
    pub resolution: usize,
    /// Expansion order `N` the membership budget refers to.
    pub order: usize,
    /// Budget `A` on `nu(lambda(eps)) |lambda(eps) - 1|^{N+1}`.
    pub a_budget: f64,
    /// Fourier modes probed for the small-divisor sup.
    pub k_probe: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            alpha: -1.0,
            a: 5,
            r0: 1.0,
            resolution: 256,
            order: 1,
            a_budget: 0.03,
            k_probe: 10_000,
        }
    }
}

/// Everything a run needs.  Solver knobs double as continuation knobs; the
/// scan block is ignored by the other subcommands and vice versa.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub family: FamilyConfig,
    /// Rotation number of the target torus.
    #[serde(default = "default_omega")]
    pub omega: f64,
    /// Diophantine exponent used in small-divisor estimates.
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Modes probed when classifying the factor against resonances.
    #[serde(default = "default_k_probe")]
    pub k_probe: usize,
    /// Fourier truncation of the torus parameterization.
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    /// Newton stop: sup-norm of the invariance error.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Neumann truncation cap for the whisker solves.
    #[serde(default = "default_l0")]
    pub l0: usize,
    /// Predictor order for `continue`.
    #[serde(default = "default_order")]
    pub expansion_order: usize,
    /// Legs for `continue`; must start at 0.
    #[serde(default = "default_eps_path")]
    pub eps_path: Vec<f64>,
    #[serde(default)]
    pub scan: ScanConfig,
}

fn default_c() -> f64 {
    1.5
}
fn default_eps_c() -> f64 {
    0.05
}
fn default_eps() -> f64 {
    0.01
}
fn default_omega() -> f64 {
    wkam::cohomology::golden_mean()
}
fn default_tau() -> f64 {
    1.0
}
fn default_k_probe() -> usize {
    256
}
fn default_k_max() -> usize {
    64
}
fn default_tol() -> f64 {
    1e-11
}
fn default_max_iter() -> usize {
    12
}
fn default_l0() -> usize {
    DEFAULT_L0
}
fn default_order() -> usize {
    1
}
fn default_eps_path() -> Vec<f64> {
    vec![0.0]
}

impl RunConfig {
    /// Parse and validate a config file.  Every failure here is a config
    /// error by definition, hence the plain-string error type.
    pub fn load(path: &Path) -> Result<RunConfig, String> {
        let text = fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), String> {
        let finite = [
            ("family.lambda", self.family.lambda),
            ("family.c", self.family.c),
            ("family.eps_c", self.family.eps_c),
            ("family.eps", self.family.eps),
            ("omega", self.omega),
            ("tau", self.tau),
            ("tol", self.tol),
            ("scan.alpha", self.scan.alpha),
            ("scan.r0", self.scan.r0),
            ("scan.a_budget", self.scan.a_budget),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(format!("{name} = {v} is not finite"));
            }
        }
        if self.family.lambda <= 0.0 {
            return Err(format!("family.lambda = {} must be positive", self.family.lambda));
        }
        if !(0.0 < self.omega && self.omega < 1.0) {
            return Err(format!("omega = {} must lie in (0, 1)", self.omega));
        }
        if self.tau < 0.0 {
            return Err(format!("tau = {} must be nonnegative", self.tau));
        }
        if self.k_max == 0 {
            return Err("k_max must be at least 1".into());
        }
        if self.tol <= 0.0 {
            return Err(format!("tol = {} must be positive", self.tol));
        }
        if self.max_iter == 0 {
            return Err("max_iter must be at least 1".into());
        }
        if self.l0 == 0 {
            return Err("l0 must be at least 1".into());
        }
        if self.scan.a == 0 {
            return Err("scan.a must be at least 1".into());
        }
        if self.scan.a_budget <= 0.0 {
            return Err(format!("scan.a_budget = {} must be positive", self.scan.a_budget));
        }
        if self.scan.r0 < 0.0 {
            return Err(format!("scan.r0 = {} must be nonnegative", self.scan.r0));
        }
        for (i, eps) in self.eps_path.iter().enumerate() {
            if !eps.is_finite() {
                return Err(format!("eps_path[{i}] = {eps} is not finite"));
            }
        }
        Ok(())
    }

    /// The configured map family.
    pub fn family(&self) -> KickedFamily {
        KickedFamily::frozen(self.family.lambda, self.family.c, self.family.eps_c)
    }

    /// Diophantine data for the configured rotation.
    pub fn diophantine(&self) -> Result<DiophantineData, String> {
        DiophantineData::new(&[self.omega], self.tau, self.k_probe).map_err(|e| e.to_string())
    }

    /// The analytic flat-circle seed with the uncoupled product splitting,
    /// at the given coupling strength.
    pub fn builtin_seed(&self, eps: f64) -> Result<TorusSolution, String> {
        let family = self.family();
        let (k, mu) = family.seed_guess(self.omega, eps, self.k_max);
        let splitting =
            product_splitting(&family.uncoupled_twin()).map_err(|e| e.to_string())?;
        Ok(TorusSolution::from_seed(k, mu, eps, splitting))
    }

    /// The domain-scan spec assembled from the shared rotation data and the
    /// scan block.
    pub fn scan_spec(&self) -> DomainScanSpec {
        DomainScanSpec {
            omega: vec![self.omega],
            tau: self.tau,
            alpha: self.scan.alpha,
            a: self.scan.a,
            r0: self.scan.r0,
            resolution: self.scan.resolution,
            order: self.scan.order,
            a_budget: self.scan.a_budget,
            k_probe: self.scan.k_probe,
        }
    }

    /// Factor `verify` checks against: the declared override, else the
    /// family's own.
    pub fn check_lambda(&self) -> f64 {
        self.family.declared_lambda.unwrap_or(self.family.lambda)
    }

    /// Canonical materialized form: all defaults filled in, pretty-printed,
    /// trailing newline.  This is what lands next to the outputs.
    pub fn materialized(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("config serializes");
        text.push('\n');
        text
    }

    /// Hex SHA-256 of the materialized form, so two runs can be compared
    /// without diffing configs.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.materialized().as_bytes());
        let mut hex = String::with_capacity(64);
        for byte in hash {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }
}

/// Deterministic lattice of phase-space sample points for the Jacobian
/// checks: a 4^4 grid over angles in `[0, 1)` and momenta in `[-0.5, 0.5)`.
pub fn sample_lattice() -> Vec<RVec> {
    let mut samples = Vec::with_capacity(256);
    for ix in 0..4 {
        for iy in 0..4 {
            for ip in 0..4 {
                for iq in 0..4 {
                    samples.push(RVec::from_vec(vec![
                        ix as f64 / 4.0,
                        iy as f64 / 4.0,
                        ip as f64 / 4.0 - 0.5,
                        iq as f64 / 4.0 - 0.5,
                    ]));
                }
            }
        }
    }
    samples
}
