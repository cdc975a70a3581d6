//! Twisted cohomological equations over an irrational rotation.
//!
//! The basic object is the difference equation
//!
//! ```text
//!     lambda * w(theta) - w(theta + omega) = eta(theta)
//! ```
//!
//! solved coefficientwise: `w_k = eta_k / (lambda - e^{2 pi i k.omega})`.
//! For `lambda = 1` the `k = 0` divisor vanishes, so the right-hand side must
//! average to zero and the solution is normalized to zero average; the same
//! normalization is available for `lambda != 1` via the `zero_average` flag
//! (the Newton engine handles averages separately and always sets it).
//!
//! The quality of the pair `(lambda, omega)` is measured by
//!
//! ```text
//!     nu(lambda; omega, tau) = sup_{0 < |k| <= K} |e^{2 pi i k.omega} - lambda|^{-1} |k|^{-tau}
//! ```
//!
//! truncated to a probe box `K`.  `nu` is finite exactly when `lambda` avoids
//! the closure of the rotation phases; it blows up as `lambda` approaches a
//! resonance `e^{2 pi i k.omega}`, which is what the domain scans visualize.

use crate::error::{Error, Result};
use crate::fourier::{cis, FourierSeries};
use num_complex::Complex64;
use std::f64::consts::TAU;

/// `lambda` within this distance of 1 is treated as the symplectic case for
/// the average (k = 0) equation.
pub const RESONANCE_TOL: f64 = 1e-10;
/// Hard floor on divisor magnitudes; below this the equation is reported as
/// resonant rather than divided through.
pub const DIVISOR_FLOOR: f64 = 1e-14;
/// Solvability tolerance on the right-hand-side average when the `k = 0`
/// equation is degenerate.
pub const AVG_TOL: f64 = 1e-10;

/// Rotation vector with its Diophantine bookkeeping (exponent `tau`, probe
/// cutoff, and a phase table for the scalar case).
#[derive(Debug, Clone)]
pub struct DiophantineData {
    omega: Vec<f64>,
    tau: f64,
    k_probe: usize,
    /// `e^{2 pi i k omega}` for `k = 1..=k_probe` (only cached for d = 1,
    /// where membership scans evaluate `nu` tens of thousands of times).
    phases: Vec<Complex64>,
}

impl DiophantineData {
    pub fn new(omega: &[f64], tau: f64, k_probe: usize) -> Result<Self> {
        if omega.is_empty() || omega.len() > 2 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: omega.len(),
            });
        }
        if tau.is_nan() || tau <= 0.0 || k_probe == 0 {
            return Err(Error::Format {
                context: "diophantine data needs tau > 0 and k_probe >= 1".into(),
            });
        }
        let phases = if omega.len() == 1 {
            (1..=k_probe)
                .map(|k| cis(TAU * (k as f64 * omega[0])))
                .collect()
        } else {
            Vec::new()
        };
        Ok(DiophantineData {
            omega: omega.to_vec(),
            tau,
            k_probe,
            phases,
        })
    }

    pub fn d(&self) -> usize {
        self.omega.len()
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn k_probe(&self) -> usize {
        self.k_probe
    }

    /// `e^{2 pi i k.omega}`, computed directly from the multi-index so the
    /// result is reproducible by anyone applying the same formula.
    pub fn phase(&self, k: &[i32]) -> Complex64 {
        let dot: f64 = k
            .iter()
            .zip(&self.omega)
            .map(|(&ki, &wi)| ki as f64 * wi)
            .sum();
        cis(TAU * dot)
    }

    /// Truncated Diophantine quality of `lambda` relative to the rotation:
    /// the sup of `|e^{2 pi i k.omega} - lambda|^{-1} |k|_1^{-tau}` over
    /// `0 < |k|_inf <= k_probe`.  An exact hit reports the resonant index.
    pub fn nu_estimate(&self, lambda: Complex64) -> Result<f64> {
        let mut sup = 0.0f64;
        if self.d() == 1 {
            for (i, &u) in self.phases.iter().enumerate() {
                let k = (i + 1) as f64;
                let weight = k.powf(-self.tau);
                for (sign, phase) in [(1i32, u), (-1i32, u.conj())] {
                    let dist = (phase - lambda).norm();
                    if dist == 0.0 {
                        return Err(Error::Resonance {
                            k: vec![sign * (i as i32 + 1)],
                        });
                    }
                    sup = sup.max(weight / dist);
                }
            }
        } else {
            let kp = self.k_probe as i32;
            for k0 in -kp..=kp {
                for k1 in -kp..=kp {
                    if k0 == 0 && k1 == 0 {
                        continue;
                    }
                    let k = [k0, k1];
                    let order = (k0.unsigned_abs() + k1.unsigned_abs()) as f64;
                    let dist = (self.phase(&k) - lambda).norm();
                    if dist == 0.0 {
                        return Err(Error::Resonance { k: k.to_vec() });
                    }
                    sup = sup.max(order.powf(-self.tau) / dist);
                }
            }
        }
        Ok(sup)
    }

    /// Smallest divisor `|lambda - e^{2 pi i k.omega}|` over the truncation
    /// box of a series, with the index attaining it.  Diagnostic for
    /// near-resonant factors.
    pub fn smallest_divisor(&self, lambda: Complex64, k_max: usize) -> (Vec<i32>, f64) {
        let mut best_k = vec![0; self.d()];
        let mut best = f64::INFINITY;
        crate::fourier::fft::for_each_mode(self.d(), k_max, |k| {
            if k.iter().all(|&ki| ki == 0) {
                return;
            }
            let dist = (lambda - self.phase(k)).norm();
            if dist < best {
                best = dist;
                best_k = k.to_vec();
            }
        });
        (best_k, best)
    }

    /// Solve `lambda w - w o T_omega = eta` coefficientwise.
    ///
    /// With `zero_average` set, the `k = 0` coefficient of the solution is
    /// forced to zero and the right-hand-side average must vanish (up to
    /// [`AVG_TOL`]); this is required when `lambda = 1` and is how the Newton
    /// engine calls it for every `lambda`.  Without the flag the average
    /// equation is divided through by `lambda - 1`.
    pub fn solve_twisted(
        &self,
        lambda: Complex64,
        eta: &FourierSeries,
        zero_average: bool,
    ) -> Result<FourierSeries> {
        if eta.d() != self.d() {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                got: eta.d(),
            });
        }
        let zero = vec![0i32; self.d()];
        let mut out = FourierSeries::zeros(eta.d(), eta.shape(), eta.k_max());

        // The k = 0 equation `(lambda - 1) w_0 = eta_0` is handled up front
        // (the series is sparse; an absent coefficient still has an equation).
        let avg = eta.coeff(&zero);
        let avg_mag = avg.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if zero_average {
            if avg_mag > AVG_TOL {
                return Err(Error::NonZeroAverage { magnitude: avg_mag });
            }
            // w_0 := 0, i.e. simply not stored.
        } else {
            let divisor = lambda - Complex64::new(1.0, 0.0);
            if divisor.norm() < DIVISOR_FLOOR {
                // lambda = 1 without the flag: the average equation is
                // degenerate; the caller must opt into the normalization.
                if avg_mag > AVG_TOL {
                    return Err(Error::NonZeroAverage { magnitude: avg_mag });
                }
                return Err(Error::SmallDivisor {
                    k: zero.clone(),
                    magnitude: divisor.norm(),
                });
            }
            if avg_mag > 0.0 {
                out.set_coeff(&zero, avg.map(|z| z / divisor))?;
            }
        }

        for (k, block) in eta.coeffs() {
            if *k == zero {
                continue;
            }
            let divisor = lambda - self.phase(k);
            let mag = divisor.norm();
            if mag == 0.0 {
                return Err(Error::Resonance { k: k.clone() });
            }
            if mag < DIVISOR_FLOOR {
                return Err(Error::SmallDivisor {
                    k: k.clone(),
                    magnitude: mag,
                });
            }
            out.set_coeff(k, block.map(|z| z / divisor))?;
        }
        Ok(out)
    }
}

/// The golden-mean rotation number `(sqrt 5 - 1) / 2`, the default frequency
/// throughout the crate.
pub fn golden_mean() -> f64 {
    (5.0f64.sqrt() - 1.0) / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::{CMat, FourierSeries};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn scalar(v: Complex64) -> CMat {
        CMat::from_element(1, 1, v)
    }

    fn random_eta(seed: u64, k_max: usize, zero_avg: bool) -> FourierSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = FourierSeries::zeros(1, (1, 1), k_max);
        for k in -(k_max as i32)..=k_max as i32 {
            if k == 0 && zero_avg {
                continue;
            }
            s.set_coeff(&[k], scalar(c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))))
                .unwrap();
        }
        s.symmetrize_real()
    }

    #[test]
    fn single_mode_half_lambda_quarter_rotation() {
        // Divisor 1/2 - e^{i pi/2} = 1/2 - i, so w_1 = 1/(1/2 - i) = 0.4 + 0.8i.
        let dd = DiophantineData::new(&[0.25], 1.0, 10).unwrap();
        let mut eta = FourierSeries::zeros(1, (1, 1), 2);
        eta.set_coeff(&[1], scalar(c(1.0, 0.0))).unwrap();
        let w = dd
            .solve_twisted(c(0.5, 0.0), &eta, false)
            .unwrap();
        let w1 = w.coeff(&[1])[(0, 0)];
        assert_abs_diff_eq!(w1.re, 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(w1.im, 0.8, epsilon = 1e-15);
    }

    #[test]
    fn matches_per_coefficient_division_oracle_exactly() {
        let dd = DiophantineData::new(&[golden_mean()], 1.0, 10).unwrap();
        for (seed, lambda) in [(1u64, c(0.9, 0.0)), (2, c(0.5, 0.1)), (3, c(0.5, 0.0))] {
            let eta = random_eta(seed, 32, false);
            let w = dd.solve_twisted(lambda, &eta, false).unwrap();
            for (k, block) in eta.coeffs() {
                // Independent oracle: the divisor formula applied verbatim.
                let divisor = if k[0] == 0 {
                    lambda - c(1.0, 0.0)
                } else {
                    lambda - cis(TAU * (k[0] as f64 * golden_mean()))
                };
                let expect = block[(0, 0)] / divisor;
                let got = w.coeff(k)[(0, 0)];
                assert_eq!(expect.re.to_bits(), got.re.to_bits(), "k={k:?}");
                assert_eq!(expect.im.to_bits(), got.im.to_bits(), "k={k:?}");
            }
        }
    }

    #[test]
    fn back_substitution_residual_is_tiny() {
        let omega = golden_mean();
        let dd = DiophantineData::new(&[omega], 1.0, 10).unwrap();
        for lambda in [c(0.9, 0.0), c(1.0, 0.0), c(0.5, 0.1)] {
            let zero_avg = true;
            let eta = random_eta(9, 48, true);
            let w = dd.solve_twisted(lambda, &eta, zero_avg).unwrap();
            let residual = w
                .scale(lambda)
                .sub(&w.shift(&[omega]))
                .unwrap()
                .sub(&eta)
                .unwrap();
            assert!(
                residual.norm_rho(0.0) <= 1e-12 * eta.norm_rho(0.0),
                "lambda = {lambda}"
            );
        }
    }

    #[test]
    fn symplectic_case_needs_flag_and_zero_average() {
        let dd = DiophantineData::new(&[golden_mean()], 1.0, 10).unwrap();
        let one = c(1.0, 0.0);
        let eta = random_eta(4, 16, true);
        // Without the normalization flag the average equation is unsolvable.
        assert!(matches!(
            dd.solve_twisted(one, &eta, false),
            Err(Error::SmallDivisor { .. })
        ));
        let w = dd.solve_twisted(one, &eta, true).unwrap();
        assert_eq!(w.coeff(&[0])[(0, 0)], c(0.0, 0.0));
        // A nonzero average violates solvability even with the flag.
        let mut bad = eta.clone();
        bad.set_coeff(&[0], scalar(c(1e-3, 0.0))).unwrap();
        assert!(matches!(
            dd.solve_twisted(one, &bad, true),
            Err(Error::NonZeroAverage { .. })
        ));
    }

    #[test]
    fn exact_resonance_is_reported_with_its_index() {
        // omega = 1/8 and lambda exactly on the k = 3 phase.
        let dd = DiophantineData::new(&[0.125], 1.0, 10).unwrap();
        let lambda = cis(TAU * 3.0 * 0.125);
        let mut eta = FourierSeries::zeros(1, (1, 1), 4);
        eta.set_coeff(&[3], scalar(c(1.0, 0.0))).unwrap();
        match dd.solve_twisted(lambda, &eta, false) {
            Err(Error::Resonance { k }) => assert_eq!(k, vec![3]),
            other => panic!("expected resonance, got {other:?}"),
        }
        assert!(matches!(dd.nu_estimate(lambda), Err(Error::Resonance { .. })));
    }

    #[test]
    fn nu_matches_brute_force_enumeration() {
        let omega = golden_mean();
        let dd = DiophantineData::new(&[omega], 1.0, 10_000).unwrap();
        let lambda = c(1.0, 0.0);
        let nu = dd.nu_estimate(lambda).unwrap();
        // Independent loop, written from the definition.
        let mut oracle = 0.0f64;
        for k in 1..=10_000i64 {
            for s in [1.0, -1.0] {
                let phase = cis(TAU * (s * k as f64 * omega));
                let dist = (phase - lambda).norm();
                oracle = oracle.max((k as f64).powf(-1.0) / dist);
            }
        }
        assert!(nu.is_finite());
        assert_abs_diff_eq!(nu, oracle, epsilon = 1e-12 * oracle);
    }

    #[test]
    fn nu_is_monotone_in_the_probe_cutoff() {
        let omega = golden_mean();
        let lambda = c(0.97, 0.02);
        let mut last = 0.0;
        for k_probe in [10, 100, 1000, 10_000] {
            let dd = DiophantineData::new(&[omega], 1.0, k_probe).unwrap();
            let nu = dd.nu_estimate(lambda).unwrap();
            assert!(nu >= last);
            last = nu;
        }
    }

    #[test]
    fn nu_two_dimensional_brute_force() {
        let omega = [golden_mean(), 2.0f64.sqrt() - 1.0];
        let dd = DiophantineData::new(&omega, 1.5, 12).unwrap();
        let lambda = c(0.95, 0.0);
        let nu = dd.nu_estimate(lambda).unwrap();
        let mut oracle = 0.0f64;
        for k0 in -12..=12i32 {
            for k1 in -12..=12i32 {
                if (k0, k1) == (0, 0) {
                    continue;
                }
                let dot = k0 as f64 * omega[0] + k1 as f64 * omega[1];
                let dist = (cis(TAU * dot) - lambda).norm();
                let order = (k0.abs() + k1.abs()) as f64;
                oracle = oracle.max(order.powf(-1.5) / dist);
            }
        }
        assert_abs_diff_eq!(nu, oracle, epsilon = 1e-13 * oracle);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        /// The solver is linear in the right-hand side.
        #[test]
        fn solver_is_linear(sa in 0u64..100, sb in 0u64..100, a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let dd = DiophantineData::new(&[golden_mean()], 1.0, 10).unwrap();
            let lambda = c(0.9, 0.0);
            let e1 = random_eta(sa, 12, false);
            let e2 = random_eta(sb.wrapping_add(700), 12, false);
            let combined = e1.scale(c(a, 0.0)).add(&e2.scale(c(b, 0.0))).unwrap();
            let lhs = dd.solve_twisted(lambda, &combined, false).unwrap();
            let rhs = dd.solve_twisted(lambda, &e1, false).unwrap().scale(c(a, 0.0))
                .add(&dd.solve_twisted(lambda, &e2, false).unwrap().scale(c(b, 0.0))).unwrap();
            let diff = lhs.sub(&rhs).unwrap().norm_rho(0.0);
            prop_assert!(diff <= 1e-12 * (1.0 + combined.norm_rho(0.0)));
        }

        /// Solving the shifted data equals shifting the solution.
        #[test]
        fn solver_commutes_with_rotation(seed in 0u64..100, alpha in -0.5f64..0.5) {
            let dd = DiophantineData::new(&[golden_mean()], 1.0, 10).unwrap();
            let lambda = c(0.8, 0.05);
            let eta = random_eta(seed, 12, false);
            let lhs = dd.solve_twisted(lambda, &eta.shift(&[alpha]), false).unwrap();
            let rhs = dd.solve_twisted(lambda, &eta, false).unwrap().shift(&[alpha]);
            let diff = lhs.sub(&rhs).unwrap().norm_rho(0.0);
            prop_assert!(diff <= 1e-12 * (1.0 + eta.norm_rho(0.0)));
        }
    }
}
