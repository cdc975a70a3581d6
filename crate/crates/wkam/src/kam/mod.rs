//! The quasi-Newton engine for whiskered tori.
//!
//! One step: measure the invariance error, project it onto the three
//! invariant bundles, and solve each projected linearized equation in the
//! coordinates where it is simplest — a reduced triangular system on the
//! center (see [`frame`] and [`center`]), geometric series on the whiskers
//! (see [`hyperbolic`]).  The torus and the drift are corrected together,
//! the parameterization gauge is re-fixed, and the splitting is re-closed
//! around the corrected torus before the next step.
//!
//! The error is always recomputed from scratch after a step; nothing here
//! reports success based on the sizes of its own corrections.

pub mod center;
pub mod frame;
pub mod hyperbolic;

pub use center::{solve_center, CenterSolveResult, COND_MAX};
pub use frame::{build_frame, embedding_derivative, ReducibilityFrame, RANK_TOL};
pub use hyperbolic::{
    restricted_step, solve_stable, solve_unstable, substitution_residual, HyperbolicCorrection,
    L0_CAP,
};

use crate::cohomology::DiophantineData;
use crate::error::{Error, Result};
use crate::fourier::{CMat, FourierSeries, Grid, RMat, RVec};
use crate::models::{standard_symplectic, MapFamily};
use crate::splitting::{
    check_hypotheses, close_splitting, estimate_rates, invariance_defect, series_along_torus,
    Bundle, Cocycle, HypothesesReport, RateEstimate, Splitting,
};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Splitting defect above which a step re-closes before projecting.
pub const GATE_DEFECT: f64 = 1e-11;
/// Target defect when (re-)closing the splitting.
pub const CLOSING_TOL: f64 = 1e-12;
/// Sweep budget for each closing run.
pub const CLOSING_SWEEPS: usize = 80;
/// Cocycle iterations used when measuring rates inside a step.
pub const RATE_WINDOW: usize = 20;
/// Default initial truncation order for the whisker series.
pub const DEFAULT_L0: usize = 60;

/// An embedded torus candidate: periodic correction to the identity lift,
/// drift, family parameter, invariant splitting, and the run diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TorusSolution {
    /// Periodic part of the embedding; the first `d` rows carry an implicit
    /// identity lift `theta -> theta`.
    pub k: FourierSeries,
    /// Drift parameter.
    #[serde(with = "crate::fourier::io::serde_rvec")]
    pub mu: RVec,
    /// Family parameter this solution belongs to.
    pub eps: f64,
    /// Invariant splitting along the torus.
    pub splitting: Splitting,
    /// Invariance error norm at the last evaluation; infinite on a fresh
    /// seed, hence the adapter keeping it JSON-safe.
    #[serde(with = "crate::fourier::io::serde_f64")]
    pub residual_norm: f64,
    /// One record per completed Newton step.
    pub history: Vec<IterationRecord>,
}

/// Diagnostics of one Newton step, mirroring one row of the solver's
/// iteration log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    /// Invariance error after the step (recomputed from scratch).
    pub residual: f64,
    pub beta_norm: f64,
    /// Splitting defect after re-closing.
    pub defect: f64,
    pub lambda_minus: f64,
    pub lambda_c_minus: f64,
    pub lambda_c_plus: f64,
    pub lambda_plus: f64,
    pub sys_condition: f64,
}

impl TorusSolution {
    /// Package a seed for the iteration; the residual is unknown until the
    /// first evaluation.
    pub fn from_seed(k: FourierSeries, mu: RVec, eps: f64, splitting: Splitting) -> Self {
        TorusSolution {
            k,
            mu,
            eps,
            splitting,
            residual_norm: f64::INFINITY,
            history: Vec::new(),
        }
    }

    /// Angle dimension of the parameterization.
    pub fn d(&self) -> usize {
        self.k.d()
    }
}

/// Invariance error `f∘K - K∘T_omega`, evaluated on the dealiasing grid and
/// transformed back; the identity lift is added before the map and removed
/// after, so the result is an honest periodic series.
pub fn compute_error(
    f: &impl MapFamily,
    sol: &TorusSolution,
    omega: &[f64],
) -> Result<FourierSeries> {
    let d = sol.k.d();
    let rows = sol.k.shape().0;
    let n_g = crate::fourier::fft::grid_for(sol.k.k_max());
    let grid = sol.k.eval_grid(n_g)?;
    let mut values = Vec::with_capacity(grid.node_count());
    for i in 0..grid.node_count() {
        let theta = grid.theta(i);
        let node = grid.value(i);
        let mut z = RVec::zeros(rows);
        for r in 0..rows {
            z[r] = node[(r, 0)].re;
        }
        for (r, th) in theta.iter().enumerate().take(d) {
            z[r] += th;
        }
        let mut w = f.apply(&z, &sol.mu, sol.eps);
        for (r, th) in theta.iter().enumerate().take(d) {
            w[r] -= th;
        }
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("map image at node {i}"),
            });
        }
        values.push(CMat::from_fn(rows, 1, |r, _| Complex64::new(w[r], 0.0)));
    }
    let image = Grid::from_values(d, n_g, (rows, 1), values);
    let per_fk = FourierSeries::from_grid(&image, sol.k.k_max())?;

    let mut lift = RMat::zeros(rows, 1);
    for (r, th) in omega.iter().enumerate().take(d) {
        lift[(r, 0)] = *th;
    }
    per_fk
        .sub(&sol.k.shift(omega))?
        .sub(&FourierSeries::constant_real(d, &lift, 0))
}

/// Drift derivative of the family along the torus, as a `2n x d` series.
pub fn drift_series(f: &impl MapFamily, sol: &TorusSolution) -> Result<FourierSeries> {
    series_along_torus(&sol.k, |z| f.drift_derivative(z, &sol.mu, sol.eps))
}

/// Rigid reparameterization of a splitting: every stored series composed
/// with `theta -> theta + alpha`.
fn shift_splitting(sp: &Splitting, alpha: &[f64]) -> Result<Splitting> {
    Splitting::new(
        sp.d(),
        sp.reference().shift(alpha),
        sp.graph(Bundle::Stable).shift(alpha),
        sp.graph(Bundle::Center).shift(alpha),
        sp.graph(Bundle::Unstable).shift(alpha),
    )
}

/// One full Newton step: error, projections, frame, center and whisker
/// solves, update, gauge fix, splitting re-close, fresh diagnostics.  The
/// returned solution carries the step's record at the end of its history.
pub fn kam_step(
    f: &impl MapFamily,
    sol: &TorusSolution,
    dd: &DiophantineData,
    l0: usize,
) -> Result<TorusSolution> {
    let omega = dd.omega();
    let d = sol.k.d();
    let lam = f.factor_model().factor(sol.eps);

    let e = compute_error(f, sol, omega).map_err(|err| err.in_step("compute_error"))?;
    let residual = e.norm_rho(0.0);
    if !residual.is_finite() {
        return Err(Error::NonFinite {
            context: "invariance error norm".into(),
        });
    }

    let gamma = Cocycle::along_torus(f, &sol.k, &sol.mu, sol.eps, omega)
        .map_err(|err| err.in_step("cocycle"))?;
    let gtilde = drift_series(f, sol).map_err(|err| err.in_step("drift_derivative"))?;

    // The corrections are solved bundle by bundle, so the splitting must be
    // invariant to working precision before anything is projected.
    let mut work = sol.clone();
    let defect_in = invariance_defect(&gamma, &work.splitting, 0.0)
        .map_err(|err| err.in_step("splitting_defect"))?;
    if defect_in > GATE_DEFECT {
        let (closed, _) = close_splitting(&gamma, &work.splitting, CLOSING_TOL, CLOSING_SWEEPS)
            .map_err(|err| err.in_step("close_splitting"))?;
        work.splitting = closed;
    }

    let project = |b: Bundle, series: &FourierSeries| -> Result<FourierSeries> {
        work.splitting.projection(b).shift(omega).matmul(series)
    };
    let e_c = project(Bundle::Center, &e).map_err(|err| err.in_step("project_error"))?;
    let e_s = project(Bundle::Stable, &e).map_err(|err| err.in_step("project_error"))?;
    let e_u = project(Bundle::Unstable, &e).map_err(|err| err.in_step("project_error"))?;
    let g_c = project(Bundle::Center, &gtilde).map_err(|err| err.in_step("project_drift"))?;
    let g_s = project(Bundle::Stable, &gtilde).map_err(|err| err.in_step("project_drift"))?;
    let g_u = project(Bundle::Unstable, &gtilde).map_err(|err| err.in_step("project_drift"))?;

    let frame = build_frame(f, &work, &gamma).map_err(|err| err.in_step("build_frame"))?;
    let center = solve_center(&frame, &e_c, &g_c, lam, dd)
        .map_err(|err| err.in_step("solve_center"))?;
    let rates = estimate_rates(&gamma, &work.splitting, RATE_WINDOW)
        .map_err(|err| err.in_step("estimate_rates"))?;

    // Whisker truncation: keep the reported tail bound subdominant to the
    // current Newton error.
    let tail_target = 0.1 * residual;
    let corr_s = solve_stable(
        &gamma,
        &work.splitting,
        &rates,
        &e_s,
        &center.beta,
        &g_s,
        l0,
        tail_target,
    )
    .map_err(|err| err.in_step("solve_stable"))?;
    let corr_u = solve_unstable(
        &gamma,
        &work.splitting,
        &rates,
        &e_u,
        &center.beta,
        &g_u,
        l0,
        tail_target,
    )
    .map_err(|err| err.in_step("solve_unstable"))?;
    let delta_c = frame
        .m
        .matmul(&center.w_stacked()?)
        .map_err(|err| err.in_step("assemble_center"))?;

    // Update, then fix the gauge: shift the parameterization so the first
    // torus component of the periodic part has zero average, compensating
    // the shift in the lift rows.  The shift leaves the image set of the
    // torus untouched.
    let per = work
        .k
        .add(&delta_c)?
        .add(&corr_s.delta)?
        .add(&corr_u.delta)?
        .symmetrize_real();
    let mu = &work.mu + &center.beta;
    let avg = per.average();
    let alpha: Vec<f64> = (0..d).map(|i| -avg[(i, 0)].re).collect();
    let mut lift = RMat::zeros(per.shape().0, 1);
    for (i, a) in alpha.iter().enumerate() {
        lift[(i, 0)] = *a;
    }
    let per = per
        .shift(&alpha)
        .add(&FourierSeries::constant_real(d, &lift, 0))?
        .symmetrize_real();
    let carried = shift_splitting(&work.splitting, &alpha)
        .map_err(|err| err.in_step("shift_splitting"))?;

    let gamma1 = Cocycle::along_torus(f, &per, &mu, sol.eps, omega)
        .map_err(|err| err.in_step("cocycle"))?;
    let (splitting1, closing) = close_splitting(&gamma1, &carried, CLOSING_TOL, CLOSING_SWEEPS)
        .map_err(|err| err.in_step("close_splitting"))?;

    let mut next = TorusSolution {
        k: per,
        mu,
        eps: sol.eps,
        splitting: splitting1,
        residual_norm: f64::INFINITY,
        history: sol.history.clone(),
    };
    let e1 = compute_error(f, &next, omega).map_err(|err| err.in_step("compute_error"))?;
    let residual1 = e1.norm_rho(0.0);
    if !residual1.is_finite() {
        return Err(Error::NonFinite {
            context: "post-step residual".into(),
        });
    }
    let rates1 = estimate_rates(&gamma1, &next.splitting, RATE_WINDOW)
        .map_err(|err| err.in_step("estimate_rates"))?;
    next.residual_norm = residual1;
    next.history.push(IterationRecord {
        iter: sol.history.len() + 1,
        residual: residual1,
        beta_norm: center.beta.norm(),
        defect: closing.final_defect,
        lambda_minus: rates1.lambda_minus,
        lambda_c_minus: rates1.lambda_c_minus,
        lambda_c_plus: rates1.lambda_c_plus,
        lambda_plus: rates1.lambda_plus,
        sys_condition: center.sys_condition,
    });
    Ok(next)
}

/// Drive [`kam_step`] until the recomputed residual drops below `tol`.
/// Breakdown is loud: three consecutive steps that fail to halve the
/// residual stop the run, as does any sub-solver error.
pub fn solve_torus(
    f: &impl MapFamily,
    seed: &TorusSolution,
    dd: &DiophantineData,
    tol: f64,
    max_iter: usize,
    l0: usize,
) -> Result<TorusSolution> {
    let mut cur = seed.clone();
    let e = compute_error(f, &cur, dd.omega())?;
    cur.residual_norm = e.norm_rho(0.0);
    if !cur.residual_norm.is_finite() {
        return Err(Error::NonFinite {
            context: "seed residual".into(),
        });
    }
    if cur.residual_norm <= tol {
        return Ok(cur);
    }
    let mut prev = cur.residual_norm;
    let mut slow_steps = 0usize;
    for _ in 0..max_iter {
        cur = kam_step(f, &cur, dd, l0)?;
        let r = cur.residual_norm;
        if !r.is_finite() {
            return Err(Error::NonFinite {
                context: "newton residual".into(),
            });
        }
        if r <= tol {
            // Success rests on a from-scratch evaluation of the final
            // object, not on the step's own bookkeeping.
            let e = compute_error(f, &cur, dd.omega())?;
            cur.residual_norm = e.norm_rho(0.0);
            if cur.residual_norm <= tol {
                return Ok(cur);
            }
        }
        if r > prev * 0.5 {
            slow_steps += 1;
            if slow_steps >= 3 {
                return Err(Error::Stagnation {
                    iteration: cur.history.len(),
                    residual: r,
                });
            }
        } else {
            slow_steps = 0;
        }
        prev = r;
    }
    Err(Error::MaxIterExceeded {
        residual: prev,
        max_iter,
    })
}

/// Everything a finished solution claims, measured from scratch: residual,
/// splitting quality, rates and their pairing with the conformal factor,
/// isotropy of the tangent bundle, frame conditioning, and the standing
/// hypotheses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub residual: f64,
    pub invariance_defect: f64,
    pub projection_defect: f64,
    pub rates: RateEstimate,
    /// `|lambda_minus lambda_plus - lambda|`.
    pub pairing_defect: f64,
    /// `‖DK^T J DK‖` along the torus.
    pub isotropy: f64,
    pub u_residual: f64,
    pub m_condition: f64,
    pub sys_condition: f64,
    pub hypotheses: HypothesesReport,
}

/// Measure the full conclusion set for a candidate solution.
pub fn verify_solution(
    f: &impl MapFamily,
    sol: &TorusSolution,
    dd: &DiophantineData,
) -> Result<VerificationReport> {
    let omega = dd.omega();
    let lam = f.factor_model().factor(sol.eps);
    let e = compute_error(f, sol, omega)?;
    let residual = e.norm_rho(0.0);

    let gamma = Cocycle::along_torus(f, &sol.k, &sol.mu, sol.eps, omega)?;
    let defect = invariance_defect(&gamma, &sol.splitting, 0.0)?;
    let projection_defect = sol.splitting.projection_defect()?;
    let rates = estimate_rates(&gamma, &sol.splitting, RATE_WINDOW)?;
    let hypotheses = check_hypotheses(&rates, lam, defect, &sol.splitting);

    let frame = build_frame(f, sol, &gamma)?;
    let gtilde = drift_series(f, sol)?;
    let pi_c = sol.splitting.projection(Bundle::Center).shift(omega);
    let center = solve_center(&frame, &pi_c.matmul(&e)?, &pi_c.matmul(&gtilde)?, lam, dd)?;

    let dk = embedding_derivative(&sol.k)?;
    let j_amb = FourierSeries::constant_real(
        sol.k.d(),
        &standard_symplectic(sol.k.shape().0 / 2),
        0,
    );
    let isotropy = dk
        .transpose()
        .matmul(&j_amb.matmul(&dk)?)?
        .norm_rho(0.0);

    Ok(VerificationReport {
        residual,
        invariance_defect: defect,
        projection_defect,
        pairing_defect: rates.pairing_defect(lam),
        rates,
        isotropy,
        u_residual: frame.u_residual,
        m_condition: frame.m_condition,
        sys_condition: center.sys_condition,
        hypotheses,
    })
}
