//! The automatic-reducibility frame along the torus.
//!
//! On the center bundle the cocycle is reducible to a constant upper
//! triangular form: in the frame `M = [DK | v]` the conjugated cocycle is
//! `[[Id, S], [0, lambda Id]]` up to terms of the size of the invariance
//! error.  `DK` spans the tangent directions of the torus, and `v` is the
//! symplectically conjugate column built from the restriction of the ambient
//! form to the center bundle.  Everything here is series arithmetic; the
//! frame is rebuilt from scratch each Newton step.

use crate::error::{Error, Result};
use crate::fourier::{FourierSeries, RMat};
use crate::models::{standard_symplectic, MapFamily};
use crate::splitting::{Bundle, Cocycle};
use num_complex::Complex64;

use super::TorusSolution;

/// How degenerate a node of `DK` may be before the embedding is rejected,
/// relative to the largest singular value at that node.
pub const RANK_TOL: f64 = 1e-8;

/// Frame data for one Newton step.  Field names follow the construction:
/// `n` is the normalization `(DK^T DK)^{-1}`, `p = DK n`, `chi` and `v` come
/// from the inverse of the center restriction of the symplectic form, and
/// `s` is the torsion-like block coupling the two frame columns.
#[derive(Debug, Clone)]
pub struct ReducibilityFrame {
    /// `(DK^T DK)^{-1}`, d x d.
    pub n: FourierSeries,
    /// `DK (DK^T DK)^{-1}`, 2n x d.
    pub p: FourierSeries,
    /// `DK^T Jc_inv DK`, d x d.
    pub chi: FourierSeries,
    /// Conjugate column `Jc_inv DK n`, 2n x d.
    pub v: FourierSeries,
    /// The frame `[DK | v]`, 2n x 2d.
    pub m: FourierSeries,
    /// Torsion block of the reduced cocycle, d x d.
    pub s: FourierSeries,
    /// Reducibility error: `M^+(theta+omega) gamma M - [[Id, S],[0, lambda Id]]`.
    pub r: FourierSeries,
    /// Sup-node deviation of the reduced lower-right block from `lambda Id`.
    pub u_residual: f64,
    /// Worst condition number of `M` over grid nodes.
    pub m_condition: f64,
    /// Pseudo-inverse of the shifted frame, cached for the center solve.
    pub m_pinv_shifted: FourierSeries,
    /// Distance between the two published forms of the torsion formula
    /// (they differ in where the shift lands on the second factor); kept as
    /// a diagnostic, the primary form is in `s`.
    pub s_variant_gap: f64,
    /// Conformal factor at this step's `eps`.
    pub lambda: f64,
}

impl ReducibilityFrame {
    /// Coefficient norm of the reducibility error.
    pub fn r_norm(&self) -> f64 {
        self.r.norm_rho(0.0)
    }
}

/// The derivative of the full embedding: identity-lift columns plus the
/// derivative of the periodic part.
pub fn embedding_derivative(periodic: &FourierSeries) -> Result<FourierSeries> {
    let d = periodic.d();
    let rows = periodic.shape().0;
    let mut cols = Vec::with_capacity(d);
    for axis in 0..d {
        cols.push(periodic.derivative(axis));
    }
    let refs: Vec<&FourierSeries> = cols.iter().collect();
    let per_prime = FourierSeries::hstack(&refs)?;
    let lift = RMat::from_fn(rows, d, |i, j| if i == j { 1.0 } else { 0.0 });
    per_prime.add(&FourierSeries::constant_real(d, &lift, 0))
}

/// Check that `DK` has full column rank at every node.  The smallest
/// singular value found anywhere is compared against the largest one on the
/// whole grid, so a column collapsing at a single node is caught even when
/// `d = 1` (where the per-node ratio is trivially one).
fn check_rank(dk: &FourierSeries) -> Result<f64> {
    let n_g = crate::fourier::fft::grid_for(dk.k_max());
    let grid = dk.eval_grid(n_g)?;
    let mut smallest = f64::INFINITY;
    let mut largest: f64 = 0.0;
    for value in grid.values() {
        let sv = value.clone().svd(false, false).singular_values;
        largest = largest.max(sv[0]);
        smallest = smallest.min(sv[sv.len() - 1]);
    }
    let rel = smallest / largest.max(f64::MIN_POSITIVE);
    if rel < RANK_TOL {
        return Err(Error::RankDeficient { sigma_min: rel });
    }
    Ok(rel)
}

fn node_condition(m: &FourierSeries) -> Result<f64> {
    let n_g = crate::fourier::fft::grid_for(m.k_max());
    let grid = m.eval_grid(n_g)?;
    let mut worst: f64 = 0.0;
    for value in grid.values() {
        let sv = value.clone().svd(false, false).singular_values;
        worst = worst.max(sv[0] / sv[sv.len() - 1].max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

/// Build the frame around the current torus.  `gamma` must be the cocycle
/// of the same `(K, mu, eps)` stored in `sol`.
pub fn build_frame(
    f: &impl MapFamily,
    sol: &TorusSolution,
    gamma: &Cocycle,
) -> Result<ReducibilityFrame> {
    let d = sol.k.d();
    let n2 = sol.k.shape().0;
    let omega = gamma.omega().to_vec();
    let lambda = f.factor_model().factor(sol.eps);

    let dk = embedding_derivative(&sol.k)?;
    check_rank(&dk)?;
    let dk_t = dk.transpose();
    let n = dk_t.matmul(&dk)?.inverse_nodewise()?;
    let p = dk.matmul(&n)?;

    // Inverse of the symplectic form restricted to the center bundle,
    // pushed back to the ambient space: V (V^T J V)^{-1} V^T.
    let v_c = sol.splitting.basis(Bundle::Center);
    let j_amb = FourierSeries::constant_real(d, &standard_symplectic(n2 / 2), 0);
    let jc = v_c.transpose().matmul(&j_amb)?.matmul(v_c)?;
    let jc_inv_center = jc.inverse_nodewise()?;
    let jt = v_c.matmul(&jc_inv_center)?.matmul(&v_c.transpose())?;

    let v = jt.matmul(&dk)?.matmul(&n)?;
    let chi = dk_t.matmul(&jt)?.matmul(&dk)?;
    let m = FourierSeries::hstack(&[&dk, &v])?;

    // Torsion block.  First term: (P o T_omega)^T gamma Jc_inv P; second:
    // the lambda correction through chi.  The variant moves the second
    // factor's shift, a transcription ambiguity tracked as a diagnostic.
    let p_shift_t = p.shift(&omega).transpose();
    let n_shift = n.shift(&omega);
    let chi_shift = chi.shift(&omega);
    let lead = p_shift_t.matmul(gamma.gamma())?.matmul(&jt)?.matmul(&p)?;
    let lam_c = Complex64::new(lambda, 0.0);
    let s = lead.sub(
        &n_shift
            .transpose()
            .matmul(&chi_shift.transpose())?
            .matmul(&n_shift)?
            .scale(lam_c),
    )?;
    let s_variant = lead.sub(
        &n_shift
            .transpose()
            .matmul(&chi.transpose())?
            .matmul(&n)?
            .scale(lam_c),
    )?;
    let s_variant_gap = s.sub(&s_variant)?.norm_rho(0.0);

    // Reduced cocycle and its deviation from the triangular normal form.
    let m_pinv_shifted = m.shift(&omega).pinv_nodewise()?;
    let bhat = m_pinv_shifted.matmul(gamma.gamma())?.matmul(&m)?;
    let eye = FourierSeries::constant_real(d, &RMat::identity(d, d), 0);
    let top = FourierSeries::hstack(&[&eye, &s])?;
    let bottom = FourierSeries::hstack(&[
        &FourierSeries::zeros(d, (d, d), 0),
        &eye.scale(lam_c),
    ])?;
    let normal_form = FourierSeries::vstack(&[&top, &bottom])?;
    let r = bhat.sub(&normal_form)?;
    let u = bhat.block(d..2 * d, d..2 * d);
    let u_residual = u.sub(&eye.scale(lam_c))?.sup_node_norm()?;
    let m_condition = node_condition(&m)?;

    Ok(ReducibilityFrame {
        n,
        p,
        chi,
        v,
        m,
        s,
        r,
        u_residual,
        m_condition,
        m_pinv_shifted,
        s_variant_gap,
        lambda,
    })
}
