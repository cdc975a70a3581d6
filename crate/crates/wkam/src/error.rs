//! Crate-wide error type.
//!
//! Every fallible operation in the library returns [`Error`].  Variants are
//! grouped by the layer that raises them; the CLI maps them onto process exit
//! codes, so the variants carry enough payload (offending mode, node index,
//! condition number, ...) to print an actionable message.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // ---- Fourier layer ----
    #[error("value shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("torus dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("grid of {n_g} nodes per axis cannot resolve modes up to |k| = {k_max}")]
    GridTooSmall { n_g: usize, k_max: usize },

    #[error("multi-index {k:?} outside the truncation box |k| <= {k_max}")]
    IndexOutOfRange { k: Vec<i32>, k_max: usize },

    #[error("singular matrix at grid node {node} (condition estimate {cond:.3e})")]
    SingularNode { node: usize, cond: f64 },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },

    // ---- cohomological equations ----
    #[error("exact resonance: lambda equals the rotation phase at k = {k:?}")]
    Resonance { k: Vec<i32> },

    #[error("divisor below floor at k = {k:?}: |lambda - e(k.omega)| = {magnitude:.3e}")]
    SmallDivisor { k: Vec<i32>, magnitude: f64 },

    #[error("right-hand side average {magnitude:.3e} violates the solvability condition")]
    NonZeroAverage { magnitude: f64 },

    // ---- model families ----
    #[error("operation requires the uncoupled family but eps = {eps:.3e}")]
    NotUncoupled { eps: f64 },

    #[error("invalid family parameter: {what}")]
    BadFamily { what: String },

    // ---- splitting / cocycles ----
    #[error("graph-transform iteration stopped contracting (defect {defect:.3e} after {iterations} sweeps)")]
    NoContraction { defect: f64, iterations: usize },

    #[error("degenerate splitting frame at node {node} (condition {cond:.3e})")]
    DegenerateSplitting { node: usize, cond: f64 },

    #[error("rate fit needs at least {needed} product norms, got {got}")]
    RateWindowTooShort { needed: usize, got: usize },

    // ---- quasi-Newton engine ----
    #[error("embedding derivative is rank deficient (relative sigma_min {sigma_min:.3e})")]
    RankDeficient { sigma_min: f64 },

    #[error("averaged center system is near singular (condition {cond:.3e} > {limit:.3e})")]
    NearSingularSystem { cond: f64, limit: f64 },

    #[error("residual stagnated at {residual:.3e} after iteration {iteration}")]
    Stagnation { iteration: usize, residual: f64 },

    #[error("no convergence after {max_iter} iterations (residual {residual:.3e})")]
    MaxIterExceeded { residual: f64, max_iter: usize },

    #[error("{step} failed")]
    StepFailed {
        step: &'static str,
        #[source]
        source: Box<Error>,
    },

    // ---- expansions / continuation ----
    #[error("slope fit has only {usable} usable samples (needs at least 2)")]
    SlopeUnderflow { usable: usize },

    #[error("continuation failed at eps = {eps:.6e}")]
    ContinuationFailed {
        eps: f64,
        #[source]
        source: Box<Error>,
    },

    // ---- serialization ----
    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("malformed data: {context}")]
    Format { context: String },
}

impl Error {
    /// Wrap an error with the name of the algorithm step that raised it.
    pub fn in_step(self, step: &'static str) -> Error {
        Error::StepFailed {
            step,
            source: Box::new(self),
        }
    }
}
