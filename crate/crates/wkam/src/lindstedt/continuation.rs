//! Continuation in the coupling parameter: the truncated expansion
//! predicts each leg's torus and drift, a Newton run corrects it, and the
//! previous leg's splitting seeds the next leg's bundle closing.
//!
//! A leg that fails to converge ends the run; everything solved up to that
//! point is kept, together with the parameter value and error of the
//! failed leg, so a breakdown reports the last good `eps` instead of
//! discarding the path.

use crate::cohomology::DiophantineData;
use crate::error::{Error, Result};
use crate::kam::{solve_torus, TorusSolution};
use crate::models::MapFamily;

use super::{expand, LindstedtExpansion};

/// Outcome of a continuation: the solved legs in path order, and the point
/// of failure if the run did not finish.
#[derive(Debug)]
pub struct ContinuationRun {
    /// The predictor built at the base, kept for reuse and inspection.
    pub expansion: LindstedtExpansion,
    /// Converged solutions, one per completed leg.
    pub legs: Vec<TorusSolution>,
    /// Parameter value and error of the first failing leg, if any.
    pub failure: Option<(f64, Error)>,
}

impl ContinuationRun {
    /// Whether every leg of the path converged.
    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }

    /// Parameter of the last converged leg.
    pub fn last_good_eps(&self) -> Option<f64> {
        self.legs.last().map(|leg| leg.eps)
    }
}

/// Walk `eps_path`, solving one torus per entry.  The path must begin at
/// `eps = 0`, where the expansion of order `order` is built from `base`;
/// later legs seed Newton with the polynomial evaluated at their `eps` and
/// carry the previous leg's splitting.  Leg failures are recorded in the
/// returned run rather than raised, so partial progress survives.
#[allow(clippy::too_many_arguments)]
pub fn continuation_run(
    f: &impl MapFamily,
    base: &TorusSolution,
    order: usize,
    eps_path: &[f64],
    dd: &DiophantineData,
    tol: f64,
    max_iter: usize,
    l0: usize,
) -> Result<ContinuationRun> {
    if eps_path.first() != Some(&0.0) {
        return Err(Error::Format {
            context: format!(
                "continuation path must start at eps = 0, got {:?}",
                eps_path.first()
            ),
        });
    }
    let expansion = expand(f, base, order, dd)?;
    let mut run = ContinuationRun {
        expansion,
        legs: Vec::with_capacity(eps_path.len()),
        failure: None,
    };
    for &eps in eps_path {
        let (k, mu) = run.expansion.evaluate(eps)?;
        let splitting = match run.legs.last() {
            Some(prev) => prev.splitting.clone(),
            None => run.expansion.splitting.clone(),
        };
        let seed = TorusSolution::from_seed(k, mu, eps, splitting);
        match solve_torus(f, &seed, dd, tol, max_iter, l0) {
            Ok(sol) => run.legs.push(sol),
            Err(err) => {
                run.failure = Some((eps, err));
                break;
            }
        }
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohomology::golden_mean;
    use crate::kam::DEFAULT_L0;
    use crate::models::KickedFamily;
    use crate::splitting::product_splitting;

    const K_MAX: usize = 16;
    const TOL: f64 = 1e-11;

    fn dd() -> DiophantineData {
        DiophantineData::new(&[golden_mean()], 1.0, 64).unwrap()
    }

    fn base_pair() -> (KickedFamily, TorusSolution) {
        let family = KickedFamily::frozen(0.9, 1.5, 0.0);
        let (k, mu) = family.exact_seed(golden_mean(), 0.0, K_MAX).unwrap();
        let splitting = product_splitting(&family.uncoupled_twin()).unwrap();
        (family, TorusSolution::from_seed(k, mu, 0.0, splitting))
    }

    #[test]
    fn single_point_path_returns_the_base() {
        let (family, base) = base_pair();
        let run =
            continuation_run(&family, &base, 1, &[0.0], &dd(), TOL, 10, DEFAULT_L0).unwrap();
        assert!(run.completed());
        assert_eq!(run.legs.len(), 1);
        let leg = &run.legs[0];
        assert_eq!(leg.eps, 0.0);
        assert_eq!(leg.k.sub(&base.k).unwrap().norm_rho(0.0), 0.0);
        assert!(leg.residual_norm <= TOL);
    }

    #[test]
    fn every_leg_of_a_small_radius_path_converges() {
        let (family, base) = base_pair();
        let path = [0.0, 2e-3, 4e-3, 6e-3];
        let run =
            continuation_run(&family, &base, 2, &path, &dd(), TOL, 10, DEFAULT_L0).unwrap();
        assert!(run.completed(), "failure: {:?}", run.failure);
        assert_eq!(run.legs.len(), path.len());
        for (leg, &eps) in run.legs.iter().zip(&path) {
            assert_eq!(leg.eps, eps);
            assert!(leg.residual_norm <= TOL);
        }
        assert_eq!(run.last_good_eps(), Some(6e-3));
    }

    #[test]
    fn breakdown_truncates_the_run_and_names_the_leg() {
        let (family, base) = base_pair();
        let path = [0.0, 0.05, 0.2, 1.0, 10.0];
        let run =
            continuation_run(&family, &base, 1, &path, &dd(), TOL, 8, DEFAULT_L0).unwrap();
        let (bad_eps, err) = run.failure.as_ref().expect("run should break down");
        assert!(run.legs.len() < path.len());
        assert_eq!(*bad_eps, path[run.legs.len()]);
        for leg in &run.legs {
            assert!(leg.residual_norm <= TOL);
        }
        // the error is a structured solver failure, not a panic
        let text = err.to_string();
        assert!(!text.is_empty());
    }

    #[test]
    fn paths_must_start_at_zero() {
        let (family, base) = base_pair();
        let result =
            continuation_run(&family, &base, 1, &[1e-3, 2e-3], &dd(), TOL, 10, DEFAULT_L0);
        assert!(matches!(result, Err(Error::Format { .. })));
    }
}
