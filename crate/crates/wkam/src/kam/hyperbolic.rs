//! Newton corrections on the stable and unstable bundles.
//!
//! The projected equations are solved by truncated Neumann series.  The key
//! numerical point: the series is accumulated in bundle coordinates.  Each
//! step multiplies by the restricted transition `(V∘T_omega)^+ gamma V` — a
//! small matrix whose norm actually contracts — instead of the full ambient
//! matrix, whose products pick up roundoff along the dominant direction at
//! the ratio of the two rates per step and drown the contracting signal
//! within a dozen terms.  Restriction first and iteration second agree
//! exactly in exact arithmetic because the bundles are invariant; in
//! floating point only the restricted form converges.
//!
//! The truncation error is not estimated, it is known: the leftover after
//! `L` terms is exactly the first neglected term, so the geometric tail
//! bound from the measured rates is an honest certificate.  Each solve also
//! reports the substitution residual of its correction in the full-space
//! equation, which catches frame and projection errors that the tail bound
//! cannot see.

use crate::error::{Error, Result};
use crate::fourier::{FourierSeries, RMat, RVec};
use crate::splitting::{Bundle, Cocycle, RateEstimate, Splitting};
use num_complex::Complex64;

/// Hard cap on Neumann terms; reaching it without meeting the tail target
/// means the rates are too close to one for this method to be useful.
pub const L0_CAP: usize = 400;

/// A solved hyperbolic correction with its error certificates.
#[derive(Debug, Clone)]
pub struct HyperbolicCorrection {
    /// Ambient-coordinate correction, 2n x 1.
    pub delta: FourierSeries,
    /// Geometric bound on the dropped tail of the Neumann series.
    pub tail_bound: f64,
    /// Sup-norm of `gamma delta - delta∘T_omega + rhs` over the grid.
    pub residual: f64,
    /// Number of series terms actually summed.
    pub terms_used: usize,
}

/// Restricted transition of the cocycle on one bundle:
/// `(V∘T_omega)^+ gamma V`, a d_b x d_b series.
pub fn restricted_step(
    gamma: &Cocycle,
    splitting: &Splitting,
    bundle: Bundle,
) -> Result<FourierSeries> {
    let v = splitting.basis(bundle);
    let v_shift = v.shift(gamma.omega());
    v_shift.pinv_nodewise()?.matmul(&gamma.gamma().matmul(v)?)
}

fn neg_omega(omega: &[f64]) -> Vec<f64> {
    omega.iter().map(|w| -w).collect()
}

/// `e_sigma + mu_deriv_sigma * beta`: the driving term of one projected
/// equation, all pieces at the shifted angle.
fn driving_term(
    e_sigma: &FourierSeries,
    beta: &RVec,
    mu_deriv_sigma: &FourierSeries,
) -> Result<FourierSeries> {
    let d = mu_deriv_sigma.shape().1;
    let beta_series = FourierSeries::constant_real(
        e_sigma.d(),
        &RMat::from_fn(d, 1, |i, _| beta[i]),
        0,
    );
    e_sigma.add(&mu_deriv_sigma.matmul(&beta_series)?)
}

/// Substitution residual of a candidate correction in the ambient equation
/// `gamma delta - delta∘T_omega + rhs = 0`.
pub fn substitution_residual(
    gamma: &Cocycle,
    delta: &FourierSeries,
    rhs: &FourierSeries,
) -> Result<f64> {
    let lhs = gamma
        .gamma()
        .matmul(delta)?
        .sub(&delta.shift(gamma.omega()))?
        .add(rhs)?;
    Ok(lhs.norm_rho(0.0))
}

fn pick_order(l0: usize, tail: impl Fn(usize) -> f64, tail_target: f64) -> usize {
    let mut order = l0.max(1);
    loop {
        if tail(order + 1) <= tail_target || order >= L0_CAP {
            return order;
        }
        order = (order * 2).min(L0_CAP);
    }
}

/// Solve the stable-projected equation
/// `gamma delta - delta∘T_omega = -(e_s + mu_deriv_s beta)` by the forward
/// Neumann series.  `e_s` and `mu_deriv_s` are stable projections (at the
/// shifted angle) of the invariance error and the drift derivative, in
/// ambient coordinates.  `l0` is the initial truncation order; it doubles
/// until the geometric tail estimate drops below `tail_target` or the cap
/// is hit.
#[allow(clippy::too_many_arguments)]
pub fn solve_stable(
    gamma: &Cocycle,
    splitting: &Splitting,
    rates: &RateEstimate,
    e_s: &FourierSeries,
    beta: &RVec,
    mu_deriv_s: &FourierSeries,
    l0: usize,
    tail_target: f64,
) -> Result<HyperbolicCorrection> {
    let lam_minus = rates.lambda_minus;
    if !(lam_minus.is_finite() && lam_minus < 1.0) {
        return Err(Error::NoContraction {
            defect: lam_minus,
            iterations: 0,
        });
    }
    let rhs = driving_term(e_s, beta, mu_deriv_s)?;
    let rhs_norm = rhs.norm_rho(0.0);
    let minus_omega = neg_omega(gamma.omega());
    let c_s = restricted_step(gamma, splitting, Bundle::Stable)?;
    let basis = splitting.basis(Bundle::Stable);
    let r_red = basis.shift(gamma.omega()).pinv_nodewise()?.matmul(&rhs)?;

    let tail = |terms: usize| -> f64 {
        rates.c0 * lam_minus.powi(terms as i32) / (1.0 - lam_minus) * rhs_norm
    };
    let order = pick_order(l0, tail, tail_target);

    // w(theta) = sum_{k=0}^{order} C_k(theta) r~(theta - (k+1) omega) with
    // C_0 = Id and C_k = C_{k-1} * (c_s ∘ T_{-k omega}).
    let ds = c_s.shape().0;
    let mut carrier = FourierSeries::constant(
        c_s.d(),
        crate::fourier::CMat::identity(ds, ds),
        c_s.k_max(),
    );
    let mut shifted_rhs = r_red.shift(&minus_omega);
    let mut w = shifted_rhs.clone();
    for k in 1..=order {
        let step_shift: Vec<f64> = gamma.omega().iter().map(|x| -(k as f64) * x).collect();
        carrier = carrier.matmul(&c_s.shift(&step_shift))?;
        shifted_rhs = shifted_rhs.shift(&minus_omega);
        w = w.add(&carrier.matmul(&shifted_rhs)?)?;
        let growth = carrier.norm_rho(0.0);
        if !growth.is_finite() || growth > 1e6 {
            return Err(Error::NoContraction {
                defect: growth,
                iterations: k,
            });
        }
    }

    let delta = basis.matmul(&w)?;
    let residual = substitution_residual(gamma, &delta, &rhs)?;
    Ok(HyperbolicCorrection {
        delta,
        tail_bound: tail(order + 1),
        residual,
        terms_used: order + 1,
    })
}

/// Solve the unstable-projected equation by the backward Neumann series,
/// which runs through inverses of the restricted step and therefore
/// contracts at `1 / lambda_plus`.
#[allow(clippy::too_many_arguments)]
pub fn solve_unstable(
    gamma: &Cocycle,
    splitting: &Splitting,
    rates: &RateEstimate,
    e_u: &FourierSeries,
    beta: &RVec,
    mu_deriv_u: &FourierSeries,
    l0: usize,
    tail_target: f64,
) -> Result<HyperbolicCorrection> {
    let lam_plus = rates.lambda_plus;
    if !(lam_plus.is_finite() && lam_plus > 1.0) {
        return Err(Error::NoContraction {
            defect: lam_plus,
            iterations: 0,
        });
    }
    let a = 1.0 / lam_plus;
    let rhs = driving_term(e_u, beta, mu_deriv_u)?;
    let rhs_norm = rhs.norm_rho(0.0);
    let c_u = restricted_step(gamma, splitting, Bundle::Unstable)?;
    let c_u_inv = c_u.inverse_nodewise()?;
    let basis = splitting.basis(Bundle::Unstable);
    let r_red = basis.shift(gamma.omega()).pinv_nodewise()?.matmul(&rhs)?;

    let tail =
        |terms: usize| -> f64 { rates.c0 * a.powi(terms as i32 + 1) / (1.0 - a) * rhs_norm };
    let order = pick_order(l0, tail, tail_target);

    // w(theta) = -sum_{k=0}^{order} D_k(theta) r~(theta + k omega) with
    // D_0 = c_u^{-1} and D_k = D_{k-1} * (c_u^{-1} ∘ T_{k omega}).
    let mut carrier = c_u_inv.clone();
    let mut shifted_rhs = r_red.clone();
    let mut w = carrier.matmul(&shifted_rhs)?;
    for k in 1..=order {
        let step_shift: Vec<f64> = gamma.omega().iter().map(|x| (k as f64) * x).collect();
        carrier = carrier.matmul(&c_u_inv.shift(&step_shift))?;
        shifted_rhs = shifted_rhs.shift(gamma.omega());
        w = w.add(&carrier.matmul(&shifted_rhs)?)?;
        let growth = carrier.norm_rho(0.0);
        if !growth.is_finite() || growth > 1e6 {
            return Err(Error::NoContraction {
                defect: growth,
                iterations: k,
            });
        }
    }
    w = w.scale(Complex64::new(-1.0, 0.0));

    let delta = basis.matmul(&w)?;
    let residual = substitution_residual(gamma, &delta, &rhs)?;
    Ok(HyperbolicCorrection {
        delta,
        tail_bound: tail(order + 1),
        residual,
        terms_used: order + 1,
    })
}
