//! The default model family: a conformally damped twist map on `T^2 x R^2`
//! with trigonometric kicks.
//!
//! Coordinates `(x, y, p, q)`.  One step of the map:
//!
//! ```text
//!     p' = lambda(eps) p + mu + (eps_c / 2 pi) sin(2 pi x) + (eps / 2 pi) sin(2 pi (x + y))
//!     q' = lambda(eps) q +      (c     / 2 pi) sin(2 pi y) + (eps / 2 pi) sin(2 pi (x + y))
//!     x' = x + p'
//!     y' = y + q'
//! ```
//!
//! The kick is the gradient of a potential, so the force matrix is symmetric
//! and the map satisfies `Df^T J Df = lambda J` identically.  The `x` circle
//! carries the rotational torus (`d = 1`); the `(y, q)` factor has a
//! hyperbolic fixed point at the origin whose multipliers become the torus's
//! stable and unstable rates.  At `eps = eps_c = 0` the torus
//! `K(theta) = (theta, 0, omega, 0)` with drift `mu = (1 - lambda) omega` is
//! an exact solution, which the test suite leans on heavily.

use super::jet;
use super::{cos_2pi, sin_2pi, ConformalFactorModel, MapFamily};
use crate::error::{Error, Result};
use crate::fourier::{FourierSeries, RMat, RVec};
use std::f64::consts::TAU;

#[derive(Debug, Clone)]
pub struct KickedFamily {
    lam: ConformalFactorModel,
    /// Strength of the hyperbolic kick in the `(y, q)` factor.
    c: f64,
    /// Fixed strength of the rotational kick in the `(x, p)` factor; the
    /// call-time `eps` only drives the coupling kick (and possibly `lambda`).
    eps_c: f64,
}

impl KickedFamily {
    pub fn new(lam: ConformalFactorModel, c: f64, eps_c: f64) -> Self {
        KickedFamily { lam, c, eps_c }
    }

    /// The usual dissipative configuration: frozen factor `lambda`.
    pub fn frozen(lam: f64, c: f64, eps_c: f64) -> Self {
        Self::new(ConformalFactorModel::Constant(lam), c, eps_c)
    }

    /// Power-law factor `lambda(eps) = 1 + alpha eps^a`, the configuration
    /// the series expansions and domain scans use.
    pub fn power_law(alpha: f64, a: u32, c: f64, eps_c: f64) -> Self {
        Self::new(ConformalFactorModel::PowerLaw { alpha, a }, c, eps_c)
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn eps_c(&self) -> f64 {
        self.eps_c
    }

    /// The same family with the rotational kick switched off.  Its product
    /// splitting is the standard seed geometry for solves of the coupled
    /// family (same `lambda` model and `c`, so the same eigenlines).
    pub fn uncoupled_twin(&self) -> KickedFamily {
        KickedFamily {
            lam: self.lam,
            c: self.c,
            eps_c: 0.0,
        }
    }

    /// Initial guess for the torus at the given `eps`: the flat circle
    /// `K(theta) = (theta, 0, omega, 0)` (periodic part constant) and the
    /// drift that makes it invariant in the uncoupled case.
    pub fn seed_guess(&self, omega: f64, eps: f64, k_max: usize) -> (FourierSeries, RVec) {
        let lam = self.lam.factor(eps);
        let mut values = RMat::zeros(4, 1);
        values[(2, 0)] = omega;
        let periodic = FourierSeries::constant_real(1, &values, k_max);
        let mu = RVec::from_element(1, (1.0 - lam) * omega);
        (periodic, mu)
    }

    /// The exact invariant circle of the uncoupled map.  Errors unless both
    /// kicks that break it are off (`eps_c = 0` in the family and `eps = 0`
    /// at call time).
    pub fn exact_seed(&self, omega: f64, eps: f64, k_max: usize) -> Result<(FourierSeries, RVec)> {
        if self.eps_c != 0.0 {
            return Err(Error::NotUncoupled { eps: self.eps_c });
        }
        if eps != 0.0 {
            return Err(Error::NotUncoupled { eps });
        }
        Ok(self.seed_guess(omega, eps, k_max))
    }

    /// Force matrix: the Hessian of the kick potential at `(x, y)`,
    /// `G = d(kick)/d(x, y)`.  Symmetric because the kick is a gradient.
    fn force_matrix(&self, x: f64, y: f64, eps: f64) -> [[f64; 2]; 2] {
        let cx = cos_2pi(x);
        let cy = cos_2pi(y);
        let cxy = cos_2pi(x + y);
        [
            [self.eps_c * cx + eps * cxy, eps * cxy],
            [eps * cxy, self.c * cy + eps * cxy],
        ]
    }
}

impl MapFamily for KickedFamily {
    fn n(&self) -> usize {
        2
    }

    fn d(&self) -> usize {
        1
    }

    fn factor_model(&self) -> ConformalFactorModel {
        self.lam
    }

    fn apply(&self, z: &RVec, mu: &RVec, eps: f64) -> RVec {
        let (x, y, p, q) = (z[0], z[1], z[2], z[3]);
        let lam = self.lam.factor(eps);
        let coupling = eps / TAU * sin_2pi(x + y);
        let p1 = lam * p + mu[0] + self.eps_c / TAU * sin_2pi(x) + coupling;
        let q1 = lam * q + self.c / TAU * sin_2pi(y) + coupling;
        RVec::from_column_slice(&[x + p1, y + q1, p1, q1])
    }

    fn jacobian(&self, z: &RVec, _mu: &RVec, eps: f64) -> RMat {
        let lam = self.lam.factor(eps);
        let g = self.force_matrix(z[0], z[1], eps);
        // Blocks: d(x', y')/d(x, y) = I + G, d(x', y')/d(p, q) = lam I,
        //         d(p', q')/d(x, y) = G,     d(p', q')/d(p, q) = lam I.
        RMat::from_row_slice(
            4,
            4,
            &[
                1.0 + g[0][0], g[0][1],       lam, 0.0,
                g[1][0],       1.0 + g[1][1], 0.0, lam,
                g[0][0],       g[0][1],       lam, 0.0,
                g[1][0],       g[1][1],       0.0, lam,
            ],
        )
    }

    fn drift_derivative(&self, _z: &RVec, _mu: &RVec, _eps: f64) -> RMat {
        // mu feeds p' directly and x' through it.
        RMat::from_column_slice(4, 1, &[1.0, 0.0, 1.0, 0.0])
    }

    fn apply_jet(&self, z_jet: &[RVec], mu_jet: &[RVec]) -> Vec<RVec> {
        let order = z_jet.len() - 1;
        let collect = |i: usize| -> Vec<f64> { z_jet.iter().map(|z| z[i]).collect() };
        let xj = collect(0);
        let yj = collect(1);
        let pj = collect(2);
        let qj = collect(3);
        let muj: Vec<f64> = mu_jet.iter().map(|m| m[0]).collect();

        let lamj = self.lam.jet(order);
        let (sx, _) = jet::sin_cos_2pi(&xj);
        let (sy, _) = jet::sin_cos_2pi(&yj);
        let (sxy, _) = jet::sin_cos_2pi(&jet::add(&xj, &yj));
        // eps * sin(2 pi (x + y)) / 2 pi: the explicit eps factor shifts the
        // jet one order up.
        let coupling = jet::scale(&jet::shift_up(&sxy), 1.0 / TAU);

        let mut p1 = jet::mul(&lamj, &pj);
        p1 = jet::add(&p1, &muj);
        p1 = jet::add(&p1, &jet::scale(&sx, self.eps_c / TAU));
        p1 = jet::add(&p1, &coupling);

        let mut q1 = jet::mul(&lamj, &qj);
        q1 = jet::add(&q1, &jet::scale(&sy, self.c / TAU));
        q1 = jet::add(&q1, &coupling);

        let x1 = jet::add(&xj, &p1);
        let y1 = jet::add(&yj, &q1);
        (0..=order)
            .map(|m| RVec::from_column_slice(&[x1[m], y1[m], p1[m], q1[m]]))
            .collect()
    }
}

/// Multipliers of the hyperbolic `(y, q)` fixed point of the uncoupled map:
/// the eigenvalues of `[[1 + c, lambda], [c, lambda]]`.
pub fn hyperbolic_multipliers(lam: f64, c: f64) -> (f64, f64) {
    let trace = 1.0 + c + lam;
    let det = lam;
    let disc = (trace * trace - 4.0 * det).sqrt();
    ((trace - disc) / 2.0, (trace + disc) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{conformality_defect, numeric_jacobian_defect, standard_symplectic};
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn sample_points(seed: u64, count: usize) -> Vec<RVec> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| RVec::from_fn(4, |_, _| rng.random_range(-2.0..2.0)))
            .collect()
    }

    fn family() -> KickedFamily {
        KickedFamily::frozen(0.9, 1.5, 0.05)
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let fam = family();
        let mu = RVec::from_element(1, 0.07);
        for z in sample_points(1, 8) {
            assert!(numeric_jacobian_defect(&fam, &z, &mu, 0.02) < 1e-6);
        }
    }

    #[test]
    fn drift_derivative_matches_finite_differences() {
        let fam = family();
        let z = RVec::from_column_slice(&[0.3, -0.2, 0.6, 0.1]);
        let h = 1e-6;
        let fd = (fam.apply(&z, &RVec::from_element(1, h), 0.02)
            - fam.apply(&z, &RVec::from_element(1, -h), 0.02))
            / (2.0 * h);
        let an = fam.drift_derivative(&z, &RVec::zeros(1), 0.02);
        assert!((fd - an.column(0)).amax() < 1e-9);
    }

    #[test]
    fn conformal_identity_holds_to_rounding() {
        let mu = RVec::from_element(1, 0.05);
        for fam in [family(), KickedFamily::power_law(-1.0, 3, 1.5, 0.0)] {
            for eps in [0.0, 0.3] {
                let defect = conformality_defect(&fam, &mu, eps, &sample_points(2, 16));
                assert!(defect < 1e-13, "defect = {defect}");
            }
        }
    }

    #[test]
    fn jacobian_determinant_is_lambda_to_the_n() {
        let fam = family();
        let mu = RVec::zeros(1);
        for z in sample_points(3, 4) {
            let det = fam.jacobian(&z, &mu, 0.2).determinant();
            assert_abs_diff_eq!(det, 0.9 * 0.9, epsilon = 1e-12);
        }
    }

    #[test]
    fn uncoupled_circle_is_exactly_invariant() {
        let fam = KickedFamily::frozen(0.9, 1.5, 0.0);
        let omega = crate::cohomology::golden_mean();
        let (_, mu) = fam.exact_seed(omega, 0.0, 4).unwrap();
        for i in 0..17 {
            let theta = i as f64 / 17.0;
            let z = RVec::from_column_slice(&[theta, 0.0, omega, 0.0]);
            let want = RVec::from_column_slice(&[theta + omega, 0.0, omega, 0.0]);
            let got = fam.apply(&z, &mu, 0.0);
            assert!((got - want).amax() < 1e-14);
        }
    }

    #[test]
    fn exact_seed_refuses_coupled_configurations() {
        let omega = crate::cohomology::golden_mean();
        assert!(matches!(
            family().exact_seed(omega, 0.0, 4),
            Err(Error::NotUncoupled { .. })
        ));
        let fam = KickedFamily::frozen(0.9, 1.5, 0.0);
        assert!(matches!(
            fam.exact_seed(omega, 0.01, 4),
            Err(Error::NotUncoupled { .. })
        ));
    }

    #[test]
    fn hyperbolic_block_eigenvalues_match_quadratic_formula() {
        // Linearization of the (y, q) factor at the origin: [[1 + c, lam], [c, lam]].
        let fam = KickedFamily::frozen(0.9, 1.5, 0.0);
        let z = RVec::from_column_slice(&[0.37, 0.0, 0.5, 0.0]);
        let df = fam.jacobian(&z, &RVec::zeros(1), 0.0);
        let block = RMat::from_row_slice(2, 2, &[df[(1, 1)], df[(1, 3)], df[(3, 1)], df[(3, 3)]]);
        assert_eq!(block, RMat::from_row_slice(2, 2, &[2.5, 0.9, 1.5, 0.9]));
        let eigs = block.complex_eigenvalues();
        let mut mods: Vec<f64> = eigs.iter().map(|e| e.norm()).collect();
        mods.sort_by(f64::total_cmp);
        let (lo, hi) = hyperbolic_multipliers(0.9, 1.5);
        assert_abs_diff_eq!(mods[0], lo, epsilon = 1e-12);
        assert_abs_diff_eq!(mods[1], hi, epsilon = 1e-12);
        // Frozen values the rate-estimation tests refer back to.
        assert_abs_diff_eq!(hi, 3.110_673_598, epsilon = 1e-8);
        assert_abs_diff_eq!(lo, 0.289_326_402, epsilon = 1e-8);
    }

    #[test]
    fn integer_angle_shifts_commute_exactly() {
        let fam = family();
        let mu = RVec::from_element(1, 0.11);
        // Dyadic angles: the shifted lifts are exactly representable.
        let z = RVec::from_column_slice(&[0.3125, -0.46875, 0.9, 0.25]);
        let fz = fam.apply(&z, &mu, 0.13);
        for shift in [[1.0, 0.0], [0.0, 1.0], [-2.0, 3.0]] {
            let mut zs = z.clone();
            zs[0] += shift[0];
            zs[1] += shift[1];
            let fzs = fam.apply(&zs, &mu, 0.13);
            // Momenta see only reduced angles: bitwise equal.  The angle
            // outputs add the integer shift in a different order, which may
            // cost one ulp.
            let ulps = |a: f64, b: f64| a.to_bits().abs_diff(b.to_bits());
            assert!(ulps(fzs[0], fz[0] + shift[0]) <= 1);
            assert!(ulps(fzs[1], fz[1] + shift[1]) <= 1);
            assert_eq!(fzs[2].to_bits(), fz[2].to_bits());
            assert_eq!(fzs[3].to_bits(), fz[3].to_bits());
        }
    }

    #[test]
    fn exact_jets_match_taylor_expansion_of_the_map() {
        // Apply the jet to a polynomial curve and compare partial sums with
        // direct evaluation at small eps.
        let fam = KickedFamily::power_law(-1.0, 3, 1.5, 0.05);
        let z_jet: Vec<RVec> = vec![
            RVec::from_column_slice(&[0.3, -0.1, 0.7, 0.2]),
            RVec::from_column_slice(&[0.1, 0.4, -0.3, 0.6]),
            RVec::from_column_slice(&[-0.2, 0.15, 0.05, -0.4]),
            RVec::from_column_slice(&[0.3, -0.25, 0.1, 0.2]),
        ];
        let mu_jet: Vec<RVec> = vec![
            RVec::from_element(1, 0.02),
            RVec::from_element(1, -0.3),
            RVec::from_element(1, 0.0),
            RVec::from_element(1, 0.5),
        ];
        let out = fam.apply_jet(&z_jet, &mu_jet);
        for eps in [1e-3, 3e-3] {
            let zc = {
                let mut acc = RVec::zeros(4);
                for c in z_jet.iter().rev() {
                    acc = acc * eps + c;
                }
                acc
            };
            let mc = {
                let mut acc = RVec::zeros(1);
                for c in mu_jet.iter().rev() {
                    acc = acc * eps + c;
                }
                acc
            };
            let direct = fam.apply(&zc, &mc, eps);
            let mut taylor = RVec::zeros(4);
            for c in out.iter().rev() {
                taylor = taylor * eps + c;
            }
            // Truncation error is O(eps^4) with O(10) constants.
            assert!((direct - taylor).amax() < 100.0 * eps.powi(4));
        }
    }

    #[test]
    fn exact_jets_agree_with_finite_difference_default() {
        // Route the same family through the trait's default implementation.
        struct ViaDefault(KickedFamily);
        impl MapFamily for ViaDefault {
            fn n(&self) -> usize {
                self.0.n()
            }
            fn d(&self) -> usize {
                self.0.d()
            }
            fn factor_model(&self) -> ConformalFactorModel {
                self.0.factor_model()
            }
            fn apply(&self, z: &RVec, mu: &RVec, eps: f64) -> RVec {
                self.0.apply(z, mu, eps)
            }
            fn jacobian(&self, z: &RVec, mu: &RVec, eps: f64) -> RMat {
                self.0.jacobian(z, mu, eps)
            }
            fn drift_derivative(&self, z: &RVec, mu: &RVec, eps: f64) -> RMat {
                self.0.drift_derivative(z, mu, eps)
            }
        }
        let fam = KickedFamily::power_law(-1.0, 3, 1.5, 0.05);
        let z_jet: Vec<RVec> = vec![
            RVec::from_column_slice(&[0.3, -0.1, 0.7, 0.2]),
            RVec::from_column_slice(&[0.1, 0.4, -0.3, 0.6]),
            RVec::from_column_slice(&[-0.2, 0.15, 0.05, -0.4]),
        ];
        let mu_jet: Vec<RVec> =
            vec![RVec::from_element(1, 0.02), RVec::from_element(1, -0.3), RVec::zeros(1)];
        let exact = fam.apply_jet(&z_jet, &mu_jet);
        let fd = ViaDefault(fam).apply_jet(&z_jet, &mu_jet);
        for (a, b) in exact.iter().zip(&fd) {
            assert!((a - b).amax() < 1e-6);
        }
    }

    #[test]
    fn conformality_cross_check_flags_wrong_factor() {
        let fam = family();
        let mu = RVec::zeros(1);
        let pts = sample_points(7, 8);
        let ok = crate::models::conformality_defect_against(&fam, &mu, 0.0, 0.9, &pts);
        let bad = crate::models::conformality_defect_against(&fam, &mu, 0.0, 0.95, &pts);
        assert!(ok < 1e-13);
        assert!(bad > 0.04);
    }

    #[test]
    fn symplectic_matrix_convention_matches_jacobian_blocks() {
        // J pairs each angle with its own momentum; verify against the
        // uncoupled integrable map where everything is explicit.
        let fam = KickedFamily::frozen(1.0, 0.0, 0.0);
        let z = RVec::from_column_slice(&[0.2, 0.4, 0.1, -0.3]);
        let df = fam.jacobian(&z, &RVec::zeros(1), 0.0);
        let j = standard_symplectic(2);
        assert!((df.transpose() * &j * &df - &j).amax() < 1e-15);
    }
}
