//! Subcommand bodies and artifact writing.
//!
//! Every file goes through [`write_bytes`], which defers to the atomic
//! writer in `wkam::state`, and nothing here emits timestamps or machine
//! identifiers: rerunning a command with the same config must reproduce
//! every artifact byte for byte.

use std::env;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use wkam::fourier::RVec;
use wkam::kam::{solve_torus, verify_solution, IterationRecord, TorusSolution};
use wkam::lindstedt::{continuation_run, domain_scan, DomainScanSpec};
use wkam::models::{conformality_defect_against, numeric_jacobian_defect};
use wkam::state;

use crate::config::{sample_lattice, RunConfig};
use crate::{Cli, Command, Failure};

/// Version string stamped into every JSON artifact.
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Conformality is an algebraic identity of the exact Jacobian; anything
/// above rounding noise means the declared factor is wrong.
const CONFORMALITY_TOL: f64 = 1e-11;
/// Central differences with step 1e-6 agree with an exact Jacobian to about
/// 1e-10; this leaves two orders of slack.
const JACOBIAN_TOL: f64 = 1e-6;
/// Continuation bases must be converged well below the expansion gate.
const BASE_TOL: f64 = 5e-13;

pub fn dispatch(cli: &Cli) -> Result<(), Failure> {
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Config("--config PATH is required".into()))?;
    let cfg = RunConfig::load(config_path).map_err(Failure::Config)?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out)
        .map_err(|e| Failure::Config(format!("cannot create {}: {e}", out.display())))?;
    // Provenance first: even a failing run leaves the materialized config.
    write_run_header(&out, cli.command, &cfg)?;
    match cli.command {
        Command::Verify => cmd_verify(&cfg, &out),
        Command::Solve => cmd_solve(&cfg, &out, cli.resume.as_deref(), cli.verbose),
        Command::Scan => cmd_scan(&cfg, &out, cli.jobs),
        Command::Continue => cmd_continue(&cfg, &out, cli.verbose),
    }
}

// ---------------------------------------------------------------------------
// verify

#[derive(Serialize)]
struct VerifyReport {
    declared_lambda: f64,
    conformality_defect: f64,
    conformality_tol: f64,
    jacobian_defect: f64,
    jacobian_tol: f64,
    samples: usize,
    pass: bool,
}

fn cmd_verify(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let family = cfg.family();
    let declared = cfg.check_lambda();
    let eps = cfg.family.eps;
    let mu = RVec::from_element(1, (1.0 - cfg.family.lambda) * cfg.omega);
    let samples = sample_lattice();

    // Track the argmax by hand so a failure can name the offending point.
    let mut conf_worst = (0.0f64, 0usize);
    let mut jac_worst = (0.0f64, 0usize);
    for (i, z) in samples.iter().enumerate() {
        let c = conformality_defect_against(&family, &mu, eps, declared, std::slice::from_ref(z));
        if c > conf_worst.0 {
            conf_worst = (c, i);
        }
        let j = numeric_jacobian_defect(&family, z, &mu, eps);
        if j > jac_worst.0 {
            jac_worst = (j, i);
        }
    }

    let pass = conf_worst.0 <= CONFORMALITY_TOL && jac_worst.0 <= JACOBIAN_TOL;
    let report = VerifyReport {
        declared_lambda: declared,
        conformality_defect: conf_worst.0,
        conformality_tol: CONFORMALITY_TOL,
        jacobian_defect: jac_worst.0,
        jacobian_tol: JACOBIAN_TOL,
        samples: samples.len(),
        pass,
    };
    write_json(&out.join("verify.json"), &report)?;

    let describe = |z: &RVec| format!("[{}, {}, {}, {}]", z[0], z[1], z[2], z[3]);
    if conf_worst.0 > CONFORMALITY_TOL {
        return Err(Failure::Verification(format!(
            "conformality defect {:.3e} against declared lambda = {} \
             (tolerance {CONFORMALITY_TOL:.0e}), worst sample z = {}",
            conf_worst.0,
            declared,
            describe(&samples[conf_worst.1]),
        )));
    }
    if jac_worst.0 > JACOBIAN_TOL {
        return Err(Failure::Verification(format!(
            "analytic vs numeric Jacobian defect {:.3e} (tolerance {JACOBIAN_TOL:.0e}), \
             worst sample z = {}",
            jac_worst.0,
            describe(&samples[jac_worst.1]),
        )));
    }
    println!(
        "verify: ok (conformality {:.3e}, jacobian {:.3e} over {} samples)",
        conf_worst.0,
        jac_worst.0,
        samples.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// solve

fn cmd_solve(
    cfg: &RunConfig,
    out: &Path,
    resume: Option<&Path>,
    verbose: bool,
) -> Result<(), Failure> {
    let family = cfg.family();
    let dd = cfg.diophantine().map_err(Failure::Config)?;
    let mut seed = load_seed(cfg, resume)?;
    // The config owns the target coupling; a resumed state is a warm start
    // for it, not a change of target.
    seed.eps = cfg.family.eps;

    let sol = solve_torus(&family, &seed, &dd, cfg.tol, cfg.max_iter, cfg.l0)
        .map_err(Failure::Solve)?;
    if verbose {
        for rec in &sol.history {
            eprintln!(
                "iter {:2}: residual {:.3e}, beta {:.3e}, defect {:.3e}, cond {:.3e}",
                rec.iter, rec.residual, rec.beta_norm, rec.defect, rec.sys_condition
            );
        }
    }

    state::save_solution(&out.join("state.json"), &sol)
        .map_err(|e| Failure::Config(format!("writing state: {e}")))?;
    write_bytes(&out.join("convergence.csv"), convergence_csv(&sol.history).as_bytes())?;
    println!(
        "solve: residual {:.3e} after {} steps (eps = {})",
        sol.residual_norm,
        sol.history.len(),
        sol.eps
    );
    Ok(())
}

/// Seed precedence: an explicit `--resume` file, then a `seed.json` in
/// `$WKAM_SEED_DIR`, then the built-in analytic circle.  A set but unusable
/// override is an error, never a silent fallback.
fn load_seed(cfg: &RunConfig, resume: Option<&Path>) -> Result<TorusSolution, Failure> {
    if let Some(path) = resume {
        return state::load_solution(path)
            .map_err(|e| Failure::Config(format!("resume {}: {e}", path.display())));
    }
    if let Ok(dir) = env::var("WKAM_SEED_DIR") {
        let path = Path::new(&dir).join("seed.json");
        return state::load_solution(&path)
            .map_err(|e| Failure::Config(format!("WKAM_SEED_DIR seed {}: {e}", path.display())));
    }
    cfg.builtin_seed(cfg.family.eps).map_err(Failure::Config)
}

fn convergence_csv(history: &[IterationRecord]) -> String {
    let mut text = String::from(
        "iter,residual,beta_norm,defect,lambda_minus,lambda_c_minus,lambda_c_plus,lambda_plus,sys_condition\n",
    );
    for rec in history {
        writeln!(
            text,
            "{},{},{},{},{},{},{},{},{}",
            rec.iter,
            rec.residual,
            rec.beta_norm,
            rec.defect,
            rec.lambda_minus,
            rec.lambda_c_minus,
            rec.lambda_c_plus,
            rec.lambda_plus,
            rec.sys_condition
        )
        .expect("string writes cannot fail");
    }
    text
}

// ---------------------------------------------------------------------------
// scan

#[derive(Serialize)]
struct ScanHeader<'a> {
    format: &'static str,
    version: &'static str,
    spec: &'a DomainScanSpec,
    cells: usize,
    members: usize,
}

fn cmd_scan(cfg: &RunConfig, out: &Path, jobs: Option<usize>) -> Result<(), Failure> {
    let spec = cfg.scan_spec();
    let result = match jobs {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Failure::Config(format!("cannot build thread pool: {e}")))?;
            pool.install(|| domain_scan(&spec))
        }
        None => domain_scan(&spec),
    }
    .map_err(|e| Failure::Config(e.to_string()))?;

    let mut csv = Vec::new();
    result
        .write_csv(&mut csv)
        .map_err(|e| Failure::Config(format!("formatting scan CSV: {e}")))?;
    write_bytes(&out.join("scan.csv"), &csv)?;
    write_json(
        &out.join("scan.json"),
        &ScanHeader {
            format: "wkam-scan",
            version: ARTIFACT_VERSION,
            spec: &spec,
            cells: result.cells.len(),
            members: result.member_count(),
        },
    )?;
    println!("scan: {} members of {} cells", result.member_count(), result.cells.len());
    Ok(())
}

// ---------------------------------------------------------------------------
// continue

fn cmd_continue(cfg: &RunConfig, out: &Path, verbose: bool) -> Result<(), Failure> {
    if cfg.eps_path.first() != Some(&0.0) {
        return Err(Failure::Config(format!(
            "eps_path must start at 0.0, got {:?}",
            cfg.eps_path.first()
        )));
    }
    let family = cfg.family();
    let dd = cfg.diophantine().map_err(Failure::Config)?;

    // The expansion baseline has to sit well below the predictor's residual
    // gate, so the base leg is solved tighter than the config tolerance.
    let base_seed = cfg.builtin_seed(0.0).map_err(Failure::Config)?;
    let base = solve_torus(&family, &base_seed, &dd, cfg.tol.min(BASE_TOL), cfg.max_iter.max(8), cfg.l0)
        .map_err(|source| Failure::Continuation { eps: 0.0, source })?;

    let run = continuation_run(
        &family,
        &base,
        cfg.expansion_order,
        &cfg.eps_path,
        &dd,
        cfg.tol,
        cfg.max_iter,
        cfg.l0,
    )
    .map_err(|source| match source {
        wkam::Error::Format { .. } => Failure::Config(source.to_string()),
        other => Failure::Continuation { eps: 0.0, source: other },
    })?;

    let mut csv = String::from(
        "eps,mu,residual,lambda_minus,lambda_c_minus,lambda_c_plus,lambda_plus,sys_condition\n",
    );
    for (i, leg) in run.legs.iter().enumerate() {
        state::save_solution(&out.join(format!("leg_{i:03}.json")), leg)
            .map_err(|e| Failure::Config(format!("writing leg {i}: {e}")))?;
        let report = verify_solution(&family, leg, &dd)
            .map_err(|source| Failure::Continuation { eps: leg.eps, source })?;
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            leg.eps,
            leg.mu[0],
            report.residual,
            report.rates.lambda_minus,
            report.rates.lambda_c_minus,
            report.rates.lambda_c_plus,
            report.rates.lambda_plus,
            report.sys_condition
        )
        .expect("string writes cannot fail");
        if verbose {
            eprintln!(
                "leg {i}: eps {}, residual {:.3e}, {} newton steps",
                leg.eps,
                report.residual,
                leg.history.len()
            );
        }
    }
    write_bytes(&out.join("continuation.csv"), csv.as_bytes())?;

    let last_good = run.last_good_eps();
    if let Some((eps, source)) = run.failure {
        if let Some(last_good) = last_good {
            eprintln!("continuation: last good eps = {last_good}");
        }
        return Err(Failure::Continuation { eps, source });
    }
    println!(
        "continue: {} legs, final eps = {}",
        run.legs.len(),
        last_good.unwrap_or(0.0)
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// artifact plumbing

#[derive(Serialize)]
struct RunHeader<'a> {
    format: &'static str,
    version: &'static str,
    command: &'static str,
    config_sha256: String,
    config: &'a RunConfig,
}

fn write_run_header(out: &Path, command: Command, cfg: &RunConfig) -> Result<(), Failure> {
    write_json(
        &out.join("run-config.json"),
        &RunHeader {
            format: "wkam-run",
            version: ARTIFACT_VERSION,
            command: command.name(),
            config_sha256: cfg.digest(),
            config: cfg,
        },
    )
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Failure::Config(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

/// The single choke point for file output; everything lands atomically.
fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    state::write_atomic(path, bytes)
        .map_err(|e| Failure::Config(format!("writing {}: {e}", path.display())))
}
