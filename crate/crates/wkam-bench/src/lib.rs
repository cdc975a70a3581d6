//! Shared fixtures for the pipeline benchmarks: deterministic series and
//! solver setups sized like the defaults, so timings track the real
//! workloads without depending on an RNG.

use wkam::cohomology::{golden_mean, DiophantineData};
use wkam::fourier::{cis, CMat, FourierSeries};
use wkam::kam::TorusSolution;
use wkam::models::KickedFamily;
use wkam::splitting::product_splitting;

/// A full-band series with smoothly decaying coefficients and pseudo-random
/// phases; `shape` rows x columns per coefficient.
pub fn decaying_series(k_max: usize, shape: (usize, usize)) -> FourierSeries {
    let mut s = FourierSeries::zeros(1, shape, k_max);
    for k in -(k_max as i32)..=(k_max as i32) {
        let decay = 1.0 / ((1 + k.abs()) as f64).powi(2);
        let block = CMat::from_fn(shape.0, shape.1, |r, c| {
            cis(0.7 * k as f64 + 1.3 * r as f64 + 0.4 * c as f64) * decay
        });
        s.set_coeff(&[k], block).expect("mode in range");
    }
    s
}

/// The default kicked family with its Diophantine data and the analytic
/// seed at the given truncation, ready for Newton steps.
pub fn default_setup(k_max: usize) -> (KickedFamily, DiophantineData, TorusSolution) {
    let family = KickedFamily::frozen(0.9, 1.5, 0.05);
    let omega = golden_mean();
    let dd = DiophantineData::new(&[omega], 1.0, 256).expect("valid rotation data");
    let (k, mu) = family.seed_guess(omega, 0.01, k_max);
    let splitting = product_splitting(&family.uncoupled_twin()).expect("uncoupled splitting");
    let seed = TorusSolution::from_seed(k, mu, 0.01, splitting);
    (family, dd, seed)
}
