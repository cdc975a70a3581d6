//! Power-series expansion of the torus family in the coupling parameter.
//!
//! Around an exact torus of the uncoupled map, matching powers of `eps` in
//! the invariance equation produces one linear problem per order, and the
//! linear operator is the same at every order — the one the Newton step
//! already factors through the invariant splitting.  The order-`j` right
//! hand side is the `eps^j` coefficient of `f_{mu(eps), eps} ∘ K(eps)` with
//! all lower orders substituted, obtained from the family's Taylor-jet
//! evaluation on the sampling grid.
//!
//! The truncated polynomial serves three purposes: a Newton predictor for
//! continuation in `eps` (see [`continuation`]), a self-test of the solver
//! (the residual of the order-`N` truncation must decay like
//! `|eps|^{N+1}`), and the local counterpart of the global domain picture
//! drawn by [`scan`].

pub mod continuation;
pub mod scan;

pub use continuation::{continuation_run, ContinuationRun};
pub use scan::{domain_scan, DomainScanSpec, ScanCell, ScanResult};

use crate::cohomology::DiophantineData;
use crate::error::{Error, Result};
use crate::fourier::{CMat, FourierSeries, Grid, RVec};
use crate::kam::{
    build_frame, compute_error, drift_series, solve_center, solve_stable, solve_unstable,
    ReducibilityFrame, TorusSolution, CLOSING_SWEEPS, CLOSING_TOL, DEFAULT_L0, GATE_DEFECT,
    RATE_WINDOW,
};
use crate::models::MapFamily;
use crate::splitting::{
    close_splitting, estimate_rates, invariance_defect, Bundle, Cocycle, RateEstimate, Splitting,
};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Residual above which a torus does not qualify as an expansion base.
pub const BASE_RESIDUAL_TOL: f64 = 1e-12;
/// Per-order bound on the matched-coefficient residual after solving.
pub const ORDER_RESIDUAL_TOL: f64 = 1e-10;
/// Residuals below this carry no slope information and are dropped from
/// decay fits.
pub const SLOPE_FLOOR: f64 = 1e-14;

/// Taylor coefficients of the torus family `eps -> (K(eps), mu(eps))`,
/// order zero first, together with the base splitting used to seed solves
/// started from an evaluation of the polynomial.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LindstedtExpansion {
    /// Coefficients of the periodic part of the embedding.
    pub k_jets: Vec<FourierSeries>,
    /// Coefficients of the drift parameter.
    #[serde(with = "crate::fourier::io::serde_rvec_list")]
    pub mu_jets: Vec<RVec>,
    /// Invariant splitting of the base torus.
    pub splitting: Splitting,
}

impl LindstedtExpansion {
    /// Truncation order of the polynomial.
    pub fn order(&self) -> usize {
        self.k_jets.len() - 1
    }

    /// The degree-`order()` polynomial evaluated at `eps`.
    pub fn evaluate(&self, eps: f64) -> Result<(FourierSeries, RVec)> {
        let mut k = self.k_jets[0].clone();
        let mut mu = self.mu_jets[0].clone();
        let mut pow = 1.0;
        for j in 1..self.k_jets.len() {
            pow *= eps;
            k = k.add_scaled(Complex64::new(pow, 0.0), &self.k_jets[j])?;
            mu += &self.mu_jets[j] * pow;
        }
        Ok((k, mu))
    }

    /// Package an evaluation as a solver seed, reusing the base splitting.
    pub fn seed_at(&self, eps: f64) -> Result<TorusSolution> {
        let (k, mu) = self.evaluate(eps)?;
        Ok(TorusSolution::from_seed(k, mu, eps, self.splitting.clone()))
    }

    /// The same expansion cut down to a lower order.
    pub fn truncated(&self, order: usize) -> LindstedtExpansion {
        let n = order.min(self.order());
        LindstedtExpansion {
            k_jets: self.k_jets[..=n].to_vec(),
            mu_jets: self.mu_jets[..=n].to_vec(),
            splitting: self.splitting.clone(),
        }
    }
}

/// Build the expansion of `(K, mu)` through `eps^order` around an exact
/// `eps = 0` torus.  Each order is solved by the same center/whisker
/// machinery as a Newton step and then re-checked: the `eps^j` coefficient
/// of the invariance error with the new terms substituted must cancel to
/// [`ORDER_RESIDUAL_TOL`].
pub fn expand(
    f: &impl MapFamily,
    base: &TorusSolution,
    order: usize,
    dd: &DiophantineData,
) -> Result<LindstedtExpansion> {
    if base.eps != 0.0 {
        return Err(Error::Format {
            context: format!("expansion base must sit at eps = 0, got eps = {}", base.eps),
        });
    }
    let residual = compute_error(f, base, dd.omega())?.norm_rho(0.0);
    if residual > BASE_RESIDUAL_TOL {
        return Err(Error::Format {
            context: format!(
                "expansion base residual {residual:.3e} exceeds {BASE_RESIDUAL_TOL:.0e}"
            ),
        });
    }

    let solver = OrderSolver::prepare(f, base, dd, DEFAULT_L0)?;
    let mut k_jets = vec![base.k.clone()];
    let mut mu_jets = vec![base.mu.clone()];
    for j in 1..=order {
        let (k_j, mu_j, matched) = solver
            .next_order(&k_jets, &mu_jets)
            .map_err(|err| err.in_step("expansion_order"))?;
        if matched > ORDER_RESIDUAL_TOL {
            return Err(Error::Stagnation {
                iteration: j,
                residual: matched,
            });
        }
        k_jets.push(k_j);
        mu_jets.push(mu_j);
    }
    Ok(LindstedtExpansion {
        k_jets,
        mu_jets,
        splitting: solver.splitting,
    })
}

/// Least-squares slope of `log residual` versus `log |eps|` for the
/// truncated polynomial, one fresh invariance evaluation per sample.  An
/// order-`N` expansion must come out at `N + 1` or steeper; samples whose
/// residual sinks below [`SLOPE_FLOOR`] are dropped, and fewer than two
/// surviving samples is reported as underflow rather than a slope.
pub fn residual_slope(
    f: &impl MapFamily,
    exp: &LindstedtExpansion,
    eps_samples: &[f64],
    omega: &[f64],
) -> Result<f64> {
    let mut points = Vec::new();
    for &eps in eps_samples {
        if eps == 0.0 {
            continue;
        }
        let sol = exp.seed_at(eps)?;
        let r = compute_error(f, &sol, omega)?.norm_rho(0.0);
        if r > SLOPE_FLOOR {
            points.push((eps.abs().ln(), r.ln()));
        }
    }
    if points.len() < 2 {
        return Err(Error::SlopeUnderflow {
            usable: points.len(),
        });
    }
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom <= 0.0 {
        // all samples at the same magnitude: no spread to fit
        return Err(Error::SlopeUnderflow { usable: 1 });
    }
    Ok((n * sxy - sx * sy) / denom)
}

/// The linearized operator at the base torus, split and framed once and
/// reused for every order of the expansion.
struct OrderSolver<'a, F: MapFamily> {
    f: &'a F,
    dd: &'a DiophantineData,
    lam0: f64,
    l0: usize,
    gamma: Cocycle,
    splitting: Splitting,
    frame: ReducibilityFrame,
    rates: RateEstimate,
    g_c: FourierSeries,
    g_s: FourierSeries,
    g_u: FourierSeries,
}

impl<'a, F: MapFamily> OrderSolver<'a, F> {
    fn prepare(
        f: &'a F,
        base: &TorusSolution,
        dd: &'a DiophantineData,
        l0: usize,
    ) -> Result<Self> {
        let omega = dd.omega();
        let gamma = Cocycle::along_torus(f, &base.k, &base.mu, 0.0, omega)?;
        let mut work = base.clone();
        if invariance_defect(&gamma, &work.splitting, 0.0)? > GATE_DEFECT {
            let (closed, _) =
                close_splitting(&gamma, &work.splitting, CLOSING_TOL, CLOSING_SWEEPS)?;
            work.splitting = closed;
        }
        let frame = build_frame(f, &work, &gamma)?;
        let rates = estimate_rates(&gamma, &work.splitting, RATE_WINDOW)?;
        let gtilde = drift_series(f, &work)?;
        let project = |b: Bundle| work.splitting.projection(b).shift(omega).matmul(&gtilde);
        let g_c = project(Bundle::Center)?;
        let g_s = project(Bundle::Stable)?;
        let g_u = project(Bundle::Unstable)?;
        Ok(OrderSolver {
            f,
            dd,
            lam0: f.factor_model().factor(0.0),
            l0,
            gamma,
            splitting: work.splitting,
            frame,
            rates,
            g_c,
            g_s,
            g_u,
        })
    }

    /// Solve for the coefficients at order `k_jets.len()` given all lower
    /// orders.  Returns the new pair and the norm of the matched `eps^j`
    /// coefficient of the invariance error after substitution.
    fn next_order(
        &self,
        k_jets: &[FourierSeries],
        mu_jets: &[RVec],
    ) -> Result<(FourierSeries, RVec, f64)> {
        let omega = self.dd.omega();
        let order = k_jets.len();
        // With the order-j slot zeroed, the jet coefficient is exactly the
        // polynomial remainder driven by the lower orders; the unknowns
        // enter the matched equation only through the linearized operator.
        let rhs = eps_coefficient(self.f, k_jets, mu_jets, order)?;
        let project =
            |b: Bundle, s: &FourierSeries| self.splitting.projection(b).shift(omega).matmul(s);
        let e_c = project(Bundle::Center, &rhs)?;
        let e_s = project(Bundle::Stable, &rhs)?;
        let e_u = project(Bundle::Unstable, &rhs)?;
        let center = solve_center(&self.frame, &e_c, &self.g_c, self.lam0, self.dd)?;
        let tail_target = 1e-13 * rhs.norm_rho(0.0);
        let corr_s = solve_stable(
            &self.gamma,
            &self.splitting,
            &self.rates,
            &e_s,
            &center.beta,
            &self.g_s,
            self.l0,
            tail_target,
        )?;
        let corr_u = solve_unstable(
            &self.gamma,
            &self.splitting,
            &self.rates,
            &e_u,
            &center.beta,
            &self.g_u,
            self.l0,
            tail_target,
        )?;
        let k_new = self
            .frame
            .m
            .matmul(&center.w_stacked()?)?
            .add(&corr_s.delta)?
            .add(&corr_u.delta)?
            .symmetrize_real();
        let mu_new = center.beta.clone();

        let mut full_k = k_jets.to_vec();
        full_k.push(k_new.clone());
        let mut full_mu = mu_jets.to_vec();
        full_mu.push(mu_new.clone());
        let matched = eps_coefficient(self.f, &full_k, &full_mu, order)?
            .sub(&k_new.shift(omega))?
            .norm_rho(0.0);
        Ok((k_new, mu_new, matched))
    }
}

/// Coefficient of `eps^order` in `f_{mu(eps), eps} ∘ K(eps)` for the given
/// truncated jets; orders beyond the slices are treated as zero.  The
/// identity lift rides on the order-zero angle rows only, so the result is
/// periodic for `order >= 1`.
fn eps_coefficient(
    f: &impl MapFamily,
    k_jets: &[FourierSeries],
    mu_jets: &[RVec],
    order: usize,
) -> Result<FourierSeries> {
    let d = k_jets[0].d();
    let rows = k_jets[0].shape().0;
    let k_max = k_jets[0].k_max();
    let n_g = crate::fourier::fft::grid_for(k_max);
    let grids = k_jets
        .iter()
        .map(|k| k.eval_grid(n_g))
        .collect::<Result<Vec<Grid>>>()?;
    let d_mu = mu_jets[0].len();
    let node_count = grids[0].node_count();
    let mut values = Vec::with_capacity(node_count);
    for i in 0..node_count {
        let theta = grids[0].theta(i);
        let mut z_jet = Vec::with_capacity(order + 1);
        let mut mu_jet = Vec::with_capacity(order + 1);
        for l in 0..=order {
            let mut z = RVec::zeros(rows);
            if let Some(g) = grids.get(l) {
                let node = g.value(i);
                for r in 0..rows {
                    z[r] = node[(r, 0)].re;
                }
            }
            if l == 0 {
                for (r, th) in theta.iter().enumerate().take(d) {
                    z[r] += th;
                }
            }
            z_jet.push(z);
            mu_jet.push(match mu_jets.get(l) {
                Some(m) => m.clone(),
                None => RVec::zeros(d_mu),
            });
        }
        let out = f.apply_jet(&z_jet, &mu_jet);
        let w = &out[order];
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("composition jet at node {i}"),
            });
        }
        values.push(CMat::from_fn(rows, 1, |r, _| Complex64::new(w[r], 0.0)));
    }
    let grid = Grid::from_values(d, n_g, (rows, 1), values);
    FourierSeries::from_grid(&grid, k_max)
}
