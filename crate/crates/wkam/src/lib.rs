//! Spectral computation of whiskered invariant tori for conformally
//! symplectic maps.
//!
//! The crate is organized bottom-up:
//!
//! * [`fourier`] — truncated Fourier series on the d-torus (d = 1, 2) with
//!   matrix-valued coefficients, FFT-backed products, and analytic norms;
//! * [`cohomology`] — twisted difference equations `lambda w - w o T_omega = eta`
//!   and Diophantine quality estimates for the conformal factor;
//! * [`models`] — the map families under study (a kicked twist family by
//!   default) with exact Jacobians and parameter jets;
//! * [`splitting`] — invariant splittings along a torus: graph transforms,
//!   invariance defects, and hyperbolicity rate estimation;
//! * [`kam`] — the quadratically convergent corrector for the invariance
//!   equation `f o K - K o T_omega = 0` with the drift adjustment;
//! * [`lindstedt`] — series expansions of the torus in the perturbation
//!   parameter, domain scans over complex parameters, and continuation;
//! * [`state`] — (de)serialization of solver states for resume and archival.

pub mod cohomology;
pub mod error;
pub mod fourier;
pub mod kam;
pub mod lindstedt;
pub mod models;
pub mod splitting;
pub mod state;

pub use error::{Error, Result};
pub use fourier::{FourierSeries, Grid};
