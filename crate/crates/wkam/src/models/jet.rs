//! Scalar Taylor-jet arithmetic: truncated power series in the perturbation
//! parameter, represented as coefficient slices `[u_0, u_1, ..., u_N]`.
//!
//! Only what the map families need: Cauchy products, shifts by one power, and
//! the sine/cosine recurrence.  The latter follows from differentiating
//! `s = sin(v), c = cos(v)` along the series `v(eps)`:
//!
//! ```text
//!     n s_n =  sum_{m=1..n} m v_m c_{n-m}
//!     n c_n = -sum_{m=1..n} m v_m s_{n-m}
//! ```

use super::{cos_2pi, sin_2pi};
use std::f64::consts::TAU;

/// Truncated product of two jets, to the length of the shorter input.
pub fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let len = a.len().min(b.len());
    let mut out = vec![0.0; len];
    for n in 0..len {
        for m in 0..=n {
            out[n] += a[m] * b[n - m];
        }
    }
    out
}

/// Entrywise sum.
pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Multiply a jet by `eps`: shift every coefficient up one order, dropping
/// the highest.
pub fn shift_up(a: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    out[1..].copy_from_slice(&a[..a.len() - 1]);
    out
}

pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| s * x).collect()
}

/// Jets of `sin(2 pi u(eps))` and `cos(2 pi u(eps))`.
///
/// The order-zero terms use the reduced-argument evaluation shared with the
/// pointwise map so series methods and direct evaluation agree to rounding.
pub fn sin_cos_2pi(u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let len = u.len();
    let v: Vec<f64> = u.iter().map(|x| TAU * x).collect();
    let mut s = vec![0.0; len];
    let mut c = vec![0.0; len];
    s[0] = sin_2pi(u[0]);
    c[0] = cos_2pi(u[0]);
    for n in 1..len {
        let mut ds = 0.0;
        let mut dc = 0.0;
        for m in 1..=n {
            ds += m as f64 * v[m] * c[n - m];
            dc -= m as f64 * v[m] * s[n - m];
        }
        s[n] = ds / n as f64;
        c[n] = dc / n as f64;
    }
    (s, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn product_matches_hand_expansion() {
        // (1 + 2e + 3e^2)(4 + 5e) = 4 + 13e + 22e^2 + ...
        let p = mul(&[1.0, 2.0, 3.0], &[4.0, 5.0, 0.0]);
        assert_eq!(p, vec![4.0, 13.0, 22.0]);
    }

    #[test]
    fn sine_of_linear_jet_matches_closed_form() {
        // sin(v0 + v1 e): coefficient n is sin(v0 + n pi/2) v1^n / n!.
        let (u0, u1) = (0.3, 0.7);
        let (s, c) = sin_cos_2pi(&[u0, u1, 0.0, 0.0, 0.0]);
        let (v0, v1) = (TAU * u0, TAU * u1);
        let mut fact = 1.0;
        for n in 0..5 {
            if n > 0 {
                fact *= n as f64;
            }
            let expect_s = (v0 + n as f64 * std::f64::consts::FRAC_PI_2).sin() * v1.powi(n as i32) / fact;
            let expect_c = (v0 + n as f64 * std::f64::consts::FRAC_PI_2).cos() * v1.powi(n as i32) / fact;
            assert_abs_diff_eq!(s[n], expect_s, epsilon = 1e-12);
            assert_abs_diff_eq!(c[n], expect_c, epsilon = 1e-12);
        }
    }

    #[test]
    fn sine_of_quadratic_jet_third_order_term() {
        // sin(v0 + v1 e + v2 e^2): the e^3 coefficient is
        // -sin(v0) v1 v2 - cos(v0) v1^3/6.
        let (u0, u1, u2) = (0.12, -0.4, 0.25);
        let (s, _) = sin_cos_2pi(&[u0, u1, u2, 0.0]);
        let (v0, v1, v2) = (TAU * u0, TAU * u1, TAU * u2);
        let expect = -v0.sin() * v1 * v2 - v0.cos() * v1.powi(3) / 6.0;
        assert_abs_diff_eq!(s[3], expect, epsilon = 1e-12);
    }

    #[test]
    fn shift_up_moves_orders() {
        assert_eq!(shift_up(&[1.0, 2.0, 3.0]), vec![0.0, 1.0, 2.0]);
    }
}
