//! Newton correction on the center bundle.
//!
//! In the reducibility frame the center equation becomes a pair of coupled
//! difference equations with the triangular constant part `[[Id, S],[0,
//! lambda Id]]`: the second row is a lambda-twisted equation, the first a
//! plain (lambda = 1) one whose solvability constrains the averages.  The
//! drift correction `beta` and the free average of the second component are
//! chosen together so that both average obstructions vanish — that is the
//! small `2d x 2d` system whose conditioning is the practical form of the
//! twist non-degeneracy.  The construction treats `lambda = 1` and
//! `lambda != 1` uniformly; nothing is special-cased at the conservative
//! limit.

use crate::cohomology::DiophantineData;
use crate::error::{Error, Result};
use crate::fourier::{FourierSeries, RMat, RVec};
use num_complex::Complex64;

use super::frame::ReducibilityFrame;

/// Largest acceptable condition number of the average system.
pub const COND_MAX: f64 = 1e8;

/// Outcome of the center solve: the two frame components of the correction,
/// the drift update, and the average system with its conditioning.
#[derive(Debug, Clone)]
pub struct CenterSolveResult {
    /// First frame component (tangent direction), d x 1, zero average.
    pub w1c: FourierSeries,
    /// Second frame component (conjugate direction), d x 1.
    pub w2c: FourierSeries,
    /// Drift correction.
    pub beta: RVec,
    /// The 2d x 2d average system.
    pub sys_matrix: RMat,
    /// Spectral condition number of `sys_matrix`.
    pub sys_condition: f64,
}

impl CenterSolveResult {
    /// Both components stacked into the 2d x 1 frame coordinate vector.
    pub fn w_stacked(&self) -> Result<FourierSeries> {
        FourierSeries::vstack(&[&self.w1c, &self.w2c])
    }
}

fn real_average(series: &FourierSeries) -> RMat {
    let avg = series.average();
    RMat::from_fn(avg.nrows(), avg.ncols(), |i, j| avg[(i, j)].re)
}

/// Solve the center-projected Newton equation.  `e_c` and `a_c` are the
/// center projections (at the shifted angle) of the invariance error and of
/// the drift derivative, still in ambient coordinates; the frame turns them
/// into the 2d reduced right-hand sides.
pub fn solve_center(
    frame: &ReducibilityFrame,
    e_c: &FourierSeries,
    a_c: &FourierSeries,
    lam: f64,
    dd: &DiophantineData,
) -> Result<CenterSolveResult> {
    let d = frame.n.shape().0;
    let lam_c = Complex64::new(lam, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let minus = Complex64::new(-1.0, 0.0);

    // Reduced right-hand sides in frame coordinates.
    let e_t = frame.m_pinv_shifted.matmul(e_c)?;
    let a_t = frame.m_pinv_shifted.matmul(a_c)?;
    let e1 = e_t.block(0..d, 0..1);
    let e2 = e_t.block(d..2 * d, 0..1);
    let a1 = a_t.block(0..d, 0..d);
    let a2 = a_t.block(d..2 * d, 0..d);

    // Zero-average particular solutions of the twisted second row, one for
    // the error term and one per drift column.
    let w_a = dd.solve_twisted(lam_c, &e2.zero_average().scale(minus), true)?;
    let w_b = dd.solve_twisted(lam_c, &a2.zero_average().scale(minus), true)?;

    // Average obstructions.  Row one: solvability of the first (lambda = 1)
    // row; row two: the average of the twisted row itself.
    let s_bar = real_average(&frame.s);
    let swa_bar = real_average(&frame.s.matmul(&w_a)?);
    let swb_bar = real_average(&frame.s.matmul(&w_b)?);
    let e1_bar = real_average(&e1);
    let e2_bar = real_average(&e2);
    let a1_bar = real_average(&a1);
    let a2_bar = real_average(&a2);

    let mut sys = RMat::zeros(2 * d, 2 * d);
    let mut rhs = RVec::zeros(2 * d);
    for i in 0..d {
        for j in 0..d {
            sys[(i, j)] = s_bar[(i, j)];
            sys[(i, d + j)] = swb_bar[(i, j)] + a1_bar[(i, j)];
            sys[(d + i, j)] = if i == j { lam - 1.0 } else { 0.0 };
            sys[(d + i, d + j)] = a2_bar[(i, j)];
        }
        rhs[i] = -swa_bar[(i, 0)] - e1_bar[(i, 0)];
        rhs[d + i] = -e2_bar[(i, 0)];
    }

    let sv = sys.clone().svd(false, false).singular_values;
    let sys_condition = sv[0] / sv[sv.len() - 1].max(f64::MIN_POSITIVE);
    if !sys_condition.is_finite() || sys_condition > COND_MAX {
        return Err(Error::NearSingularSystem {
            cond: sys_condition,
            limit: COND_MAX,
        });
    }
    let solution = sys
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or(Error::NearSingularSystem {
            cond: sys_condition,
            limit: COND_MAX,
        })?;
    let w2_bar = RMat::from_fn(d, 1, |i, _| solution[i]);
    let beta = RVec::from_fn(d, |i, _| solution[d + i]);

    // Assemble the full second component.
    let beta_series = FourierSeries::constant_real(e2.d(), &RMat::from_fn(d, 1, |i, _| beta[i]), 0);
    let w2 = w_a
        .add(&w_b.matmul(&beta_series)?)?
        .add(&FourierSeries::constant_real(e2.d(), &w2_bar, 0))?;

    // First row: rhs must have zero average by the system's construction;
    // anything beyond roundoff means the obstruction was not removed.
    let rhs1 = frame
        .s
        .matmul(&w2)?
        .add(&e1)?
        .add(&a1.matmul(&beta_series)?)?
        .scale(minus);
    let leftover = rhs1.average().norm();
    let allowed = (1e-6 * rhs1.norm_rho(0.0)).max(1e-9);
    if leftover > allowed {
        return Err(Error::NonZeroAverage { magnitude: leftover });
    }
    let w1 = dd.solve_twisted(one, &rhs1.zero_average(), true)?;

    Ok(CenterSolveResult {
        w1c: w1,
        w2c: w2,
        beta,
        sys_matrix: sys,
        sys_condition,
    })
}
