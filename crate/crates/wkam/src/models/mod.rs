//! Map families on `T^n x R^n`.
//!
//! A family provides the map itself, its Jacobian, the derivative with
//! respect to the drift parameter `mu`, and Taylor jets in the perturbation
//! parameter `eps` (used by the series expansions).  Everything is evaluated
//! pointwise on lifts: angle coordinates live on the universal cover and are
//! never wrapped, and `apply` is equivariant under integer shifts of the
//! angles — bitwise so whenever the shifted lift is exactly representable,
//! because the trigonometric kicks reduce their arguments mod 1 before
//! evaluating.
//!
//! Conformality means `Df^T J Df = lambda J` for the standard symplectic
//! matrix `J`; [`conformality_defect`] measures the residual of this identity
//! at sample points and is what the CLI's `verify` command reports.

mod jet;
mod kicked;

pub use kicked::{hyperbolic_multipliers, KickedFamily};

use crate::error::Result;
use crate::fourier::{RMat, RVec};
use num_complex::Complex64;
use std::f64::consts::TAU;

/// `sin(2 pi x)` evaluated on the reduced argument, so integer shifts of `x`
/// give bitwise-identical results.
pub(crate) fn sin_2pi(x: f64) -> f64 {
    (TAU * x.rem_euclid(1.0)).sin()
}

/// `cos(2 pi x)`, reduced like [`sin_2pi`].
pub(crate) fn cos_2pi(x: f64) -> f64 {
    (TAU * x.rem_euclid(1.0)).cos()
}

/// The standard symplectic matrix `[[0, I], [-I, 0]]` on `R^{2n}`,
/// positions-first coordinate order.
pub fn standard_symplectic(n: usize) -> RMat {
    let mut j = RMat::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = 1.0;
        j[(n + i, i)] = -1.0;
    }
    j
}

/// Conformal factor `lambda(eps)`, either frozen or a power-law unfolding
/// through the symplectic value 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConformalFactorModel {
    /// `lambda(eps) = lambda` independently of `eps`.
    Constant(f64),
    /// `lambda(eps) = 1 + alpha eps^a`.  With `alpha < 0` and small real
    /// `eps > 0` this dips slightly below 1, the regime the domain scans
    /// explore with complex `eps`.
    PowerLaw { alpha: f64, a: u32 },
}

impl ConformalFactorModel {
    pub fn factor(&self, eps: f64) -> f64 {
        match *self {
            ConformalFactorModel::Constant(lam) => lam,
            ConformalFactorModel::PowerLaw { alpha, a } => 1.0 + alpha * eps.powi(a as i32),
        }
    }

    /// The factor continued to complex `eps` (used by domain scans).
    pub fn factor_c(&self, eps: Complex64) -> Complex64 {
        match *self {
            ConformalFactorModel::Constant(lam) => Complex64::new(lam, 0.0),
            ConformalFactorModel::PowerLaw { alpha, a } => {
                Complex64::new(1.0, 0.0) + alpha * eps.powu(a)
            }
        }
    }

    /// Taylor coefficients of `lambda(eps)` at `eps = 0` through `order`.
    pub fn jet(&self, order: usize) -> Vec<f64> {
        let mut out = vec![0.0; order + 1];
        match *self {
            ConformalFactorModel::Constant(lam) => out[0] = lam,
            ConformalFactorModel::PowerLaw { alpha, a } => {
                out[0] = 1.0;
                if (a as usize) <= order {
                    out[a as usize] = alpha;
                }
            }
        }
        out
    }
}

/// A parameterized family of conformally symplectic maps
/// `f_{mu, eps}: T^n x R^n -> T^n x R^n`, with `d <= n` rotational angle
/// directions carrying the invariant torus and a `d`-dimensional drift
/// parameter `mu`.
///
/// Points are column vectors `(angles..., momenta...)` of length `2n` on the
/// universal cover.
pub trait MapFamily {
    /// Number of angle (and momentum) coordinates.
    fn n(&self) -> usize;

    /// Dimension of the rotational torus / drift parameter.
    fn d(&self) -> usize;

    /// Conformal factor model of the family.
    fn factor_model(&self) -> ConformalFactorModel;

    /// The map applied to one point.
    fn apply(&self, z: &RVec, mu: &RVec, eps: f64) -> RVec;

    /// Jacobian `D_z f` at one point, a `2n x 2n` matrix.
    fn jacobian(&self, z: &RVec, mu: &RVec, eps: f64) -> RMat;

    /// Drift derivative `D_mu f` at one point, a `2n x d` matrix.
    fn drift_derivative(&self, z: &RVec, mu: &RVec, eps: f64) -> RMat;

    /// Taylor jet of `eps -> f_{mu(eps), eps}(z(eps))` at `eps = 0`.
    ///
    /// `z_jet` and `mu_jet` hold the Taylor coefficients of the point and the
    /// drift; the result has the same length.  The default implementation
    /// recovers the jet from central finite differences: it evaluates the
    /// curve on a symmetric stencil and solves the interpolation system, which
    /// is adequate for low orders but loses roughly half the mantissa.
    /// Families that can differentiate exactly should override it.
    fn apply_jet(&self, z_jet: &[RVec], mu_jet: &[RVec]) -> Vec<RVec> {
        let order = z_jet.len() - 1;
        let m = 2 * order + 1;
        let h = f64::EPSILON.powf(1.0 / m as f64);
        let points: Vec<f64> = (0..m).map(|i| (i as isize - order as isize) as f64 * h).collect();
        // Vandermonde solve for the interpolating polynomial through the
        // sampled curve; the leading `order + 1` coefficients are the jet.
        let vander = RMat::from_fn(m, m, |r, c| points[r].powi(c as i32));
        let lu = vander.lu();
        let dim = 2 * self.n();
        let mut samples = RMat::zeros(m, dim);
        for (r, &e) in points.iter().enumerate() {
            let z = poly_eval(z_jet, e);
            let mu = poly_eval(mu_jet, e);
            samples.row_mut(r).copy_from(&self.apply(&z, &mu, e).transpose());
        }
        let coeffs = lu.solve(&samples).expect("finite-difference stencil is nonsingular");
        (0..=order)
            .map(|j| RVec::from_fn(dim, |i, _| coeffs[(j, i)]))
            .collect()
    }
}

fn poly_eval(jet: &[RVec], eps: f64) -> RVec {
    let mut acc = RVec::zeros(jet[0].len());
    for coeff in jet.iter().rev() {
        acc = acc * eps + coeff;
    }
    acc
}

/// Max-norm residual of the conformal identity `Df^T J Df - lambda J` over
/// the sample points, with `lambda` taken from the family's factor model.
pub fn conformality_defect(
    family: &impl MapFamily,
    mu: &RVec,
    eps: f64,
    samples: &[RVec],
) -> f64 {
    conformality_defect_against(family, mu, eps, family.factor_model().factor(eps), samples)
}

/// Like [`conformality_defect`] but against an externally supplied factor,
/// so callers can cross-check a claimed `lambda`.
pub fn conformality_defect_against(
    family: &impl MapFamily,
    mu: &RVec,
    eps: f64,
    lambda: f64,
    samples: &[RVec],
) -> f64 {
    let j = standard_symplectic(family.n());
    let mut worst = 0.0f64;
    for z in samples {
        let df = family.jacobian(z, mu, eps);
        let defect = df.transpose() * &j * &df - lambda * &j;
        worst = worst.max(defect.amax());
    }
    worst
}

/// Max-norm difference between the analytic Jacobian and a central
/// finite-difference Jacobian at one point.  Testing aid.
pub fn numeric_jacobian_defect(family: &impl MapFamily, z: &RVec, mu: &RVec, eps: f64) -> f64 {
    let dim = 2 * family.n();
    let h = 1e-6;
    let mut fd = RMat::zeros(dim, dim);
    for c in 0..dim {
        let mut zp = z.clone();
        let mut zm = z.clone();
        zp[c] += h;
        zm[c] -= h;
        let diff = (family.apply(&zp, mu, eps) - family.apply(&zm, mu, eps)) / (2.0 * h);
        fd.column_mut(c).copy_from(&diff);
    }
    (family.jacobian(z, mu, eps) - fd).amax()
}

/// Validation that a family declares consistent shapes.
pub fn validate_family(family: &impl MapFamily) -> Result<()> {
    use crate::error::Error;
    if family.d() == 0 || family.d() > family.n() {
        return Err(Error::BadFamily {
            what: format!("torus dimension d = {} out of range for n = {}", family.d(), family.n()),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symplectic_matrix_squares_to_minus_identity() {
        for n in 1..=3 {
            let j = standard_symplectic(n);
            let m = &j * &j + RMat::identity(2 * n, 2 * n);
            assert_eq!(m.amax(), 0.0);
        }
    }

    #[test]
    fn reduced_trig_is_exactly_shift_invariant() {
        // Dyadic arguments, so the shifted lifts are exactly representable
        // and bitwise equality is meaningful.
        for &x in &[0.3125, -0.71875, 1.90625, 0.0, -2.25] {
            assert_eq!(sin_2pi(x).to_bits(), sin_2pi(x + 1.0).to_bits());
            assert_eq!(cos_2pi(x).to_bits(), cos_2pi(x - 2.0).to_bits());
        }
    }

    #[test]
    fn power_law_factor_rotation_symmetry() {
        // eps -> eps e^{2 pi i / a} leaves lambda(eps) invariant.
        let model = ConformalFactorModel::PowerLaw { alpha: -1.0, a: 5 };
        let eps = Complex64::new(0.4, 0.2);
        let rot = Complex64::from_polar(1.0, TAU / 5.0);
        let a = model.factor_c(eps);
        let b = model.factor_c(eps * rot);
        assert!((a - b).norm() < 1e-14);
        // ... and conjugation conjugates it.
        let c = model.factor_c(eps.conj());
        assert!((a.conj() - c).norm() < 1e-14);
    }

    #[test]
    fn factor_jet_is_the_polynomial() {
        let model = ConformalFactorModel::PowerLaw { alpha: -0.5, a: 3 };
        assert_eq!(model.jet(4), vec![1.0, 0.0, 0.0, -0.5, 0.0]);
        assert_eq!(model.jet(2), vec![1.0, 0.0, 0.0]);
        let frozen = ConformalFactorModel::Constant(0.9);
        assert_eq!(frozen.jet(2), vec![0.9, 0.0, 0.0]);
    }
}
