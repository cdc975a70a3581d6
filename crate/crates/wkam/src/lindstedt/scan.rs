//! Scan of the complex coupling-parameter disk for the region where the
//! small-divisor budget of an order-`N` expansion holds.
//!
//! For each raster cell `eps` inside the scan disk the conformal factor
//! `lambda(eps) = 1 + alpha eps^a` is evaluated, the truncated
//! small-divisor estimate `nu(lambda)` is taken from the cohomology module,
//! and the cell is a member when `nu(lambda) |lambda - 1|^{N+1}` stays
//! within the budget.  Exact resonances (and everything outside the disk)
//! are excluded with an infinite-margin sentinel.  The raster is row-major
//! with the real axis fastest, so for an even resolution `eps = 0` lands
//! exactly on a grid point.

use crate::cohomology::DiophantineData;
use crate::error::{Error, Result};
use crate::models::ConformalFactorModel;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::io::Write;

/// Smallest raster the scanner accepts per axis; coarser grids undersample
/// the resonance balls the scan exists to draw.
pub const MIN_RESOLUTION: usize = 64;

/// Everything a scan needs, and everything its output depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainScanSpec {
    /// Rotation vector of the tori the budget is protecting.
    pub omega: Vec<f64>,
    /// Diophantine exponent used in the small-divisor estimate.
    pub tau: f64,
    /// Conformal factor model `lambda(eps) = 1 + alpha eps^a`.
    pub alpha: f64,
    pub a: u32,
    /// Scan disk radius; the raster covers the square `[-r0, r0]^2`.
    pub r0: f64,
    /// Raster cells per axis.
    pub resolution: usize,
    /// Expansion order `N` the budget refers to.
    pub order: usize,
    /// Budget `A` on `nu(lambda) |lambda - 1|^{N+1}`.
    pub a_budget: f64,
    /// Mode cutoff for the truncated `nu` estimate.
    pub k_probe: usize,
}

impl DomainScanSpec {
    /// Coordinate of raster index `i` on either axis.  Written so that
    /// `i = resolution / 2` gives exactly `0.0` for even resolutions.
    pub fn grid_value(&self, i: usize) -> f64 {
        self.r0 * (2.0 * i as f64 / self.resolution as f64 - 1.0)
    }

    /// Raster index whose coordinate is closest to `x`.
    pub fn nearest_index(&self, x: f64) -> usize {
        let raw = (x / self.r0 + 1.0) * self.resolution as f64 / 2.0;
        (raw.round().max(0.0) as usize).min(self.resolution - 1)
    }
}

/// One raster cell of the scan.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScanCell {
    pub re_eps: f64,
    pub im_eps: f64,
    pub member: bool,
    /// `log10` of the budget product for members (`-inf` at `eps = 0`);
    /// excluded cells carry the `+inf` sentinel.
    #[serde(with = "serde_margin")]
    pub log_margin: f64,
}

/// A finished scan: the [`DomainScanSpec`] that produced it plus the raster,
/// row-major with the real axis fastest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanResult {
    pub spec: DomainScanSpec,
    pub cells: Vec<ScanCell>,
}

impl ScanResult {
    pub fn resolution(&self) -> usize {
        self.spec.resolution
    }

    /// Cell at raster position (`i_re`, `i_im`).
    pub fn cell(&self, i_re: usize, i_im: usize) -> &ScanCell {
        &self.cells[i_im * self.spec.resolution + i_re]
    }

    pub fn member_count(&self) -> usize {
        self.cells.iter().filter(|c| c.member).count()
    }

    /// Fraction of excluded cells within a square window of half-width
    /// `half` cells around the raster cell nearest to `eps`.  Windows are
    /// clipped at the raster edge, which is why this is a fraction and not
    /// a count.
    pub fn excluded_fraction(&self, eps: Complex64, half: usize) -> f64 {
        let res = self.spec.resolution;
        let ci = self.spec.nearest_index(eps.re);
        let cj = self.spec.nearest_index(eps.im);
        let lo = |c: usize| c.saturating_sub(half);
        let hi = |c: usize| (c + half).min(res - 1);
        let mut excluded = 0usize;
        let mut total = 0usize;
        for j in lo(cj)..=hi(cj) {
            for i in lo(ci)..=hi(ci) {
                total += 1;
                if !self.cell(i, j).member {
                    excluded += 1;
                }
            }
        }
        excluded as f64 / total as f64
    }

    /// The CSV form of the raster: header line, then one row per cell in
    /// storage order.  Infinite margins are spelled `inf` / `-inf`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "re_eps,im_eps,member,log_margin")?;
        for c in &self.cells {
            writeln!(
                w,
                "{},{},{},{}",
                c.re_eps,
                c.im_eps,
                c.member as u8,
                fmt_margin(c.log_margin)
            )?;
        }
        Ok(())
    }

    /// Companion header for the CSV: the full spec plus a summary, so a
    /// raster file is reproducible on its own.
    pub fn header_json(&self) -> serde_json::Value {
        json!({
            "spec": self.spec,
            "cells": self.cells.len(),
            "members": self.member_count(),
        })
    }
}

/// Run the scan described by `spec`.  The scan itself is total: every cell
/// gets a verdict, resonances and out-of-disk cells are excluded with an
/// infinite margin, and a zero-radius disk yields an empty raster.
pub fn domain_scan(spec: &DomainScanSpec) -> Result<ScanResult> {
    if spec.resolution < MIN_RESOLUTION {
        return Err(Error::Format {
            context: format!(
                "scan resolution {} below the minimum {MIN_RESOLUTION}",
                spec.resolution
            ),
        });
    }
    if !(spec.r0.is_finite() && spec.r0 >= 0.0) {
        return Err(Error::Format {
            context: format!("scan radius r0 = {} must be finite and >= 0", spec.r0),
        });
    }
    if spec.r0 == 0.0 {
        return Ok(ScanResult {
            spec: spec.clone(),
            cells: Vec::new(),
        });
    }
    let dd = DiophantineData::new(&spec.omega, spec.tau, spec.k_probe)?;
    let model = ConformalFactorModel::PowerLaw {
        alpha: spec.alpha,
        a: spec.a,
    };
    let res = spec.resolution;
    let cells: Vec<ScanCell> = (0..res * res)
        .into_par_iter()
        .map(|idx| {
            let re = spec.grid_value(idx % res);
            let im = spec.grid_value(idx / res);
            let (member, log_margin) = cell_verdict(spec, &dd, &model, Complex64::new(re, im));
            ScanCell {
                re_eps: re,
                im_eps: im,
                member,
                log_margin,
            }
        })
        .collect();
    Ok(ScanResult {
        spec: spec.clone(),
        cells,
    })
}

fn cell_verdict(
    spec: &DomainScanSpec,
    dd: &DiophantineData,
    model: &ConformalFactorModel,
    eps: Complex64,
) -> (bool, f64) {
    if eps.norm() > spec.r0 {
        return (false, f64::INFINITY);
    }
    let lam = model.factor_c(eps);
    let nu = match dd.nu_estimate(lam) {
        Ok(v) => v,
        Err(_) => return (false, f64::INFINITY),
    };
    let product = nu * (lam - Complex64::new(1.0, 0.0)).norm().powi(spec.order as i32 + 1);
    // NaN (conceivable only from inf * 0) must land on the excluded side
    if product.is_nan() || product > spec.a_budget {
        return (false, f64::INFINITY);
    }
    (true, product.log10())
}

fn fmt_margin(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x}")
    }
}

/// Margins in JSON keep the `inf` / `-inf` spelling instead of the `null`
/// that a bare float would turn into.
mod serde_margin {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_str(super::fmt_margin(*x).as_str())
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(x),
            Raw::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(de::Error::custom(format!("bad margin string {other:?}"))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohomology::golden_mean;
    use std::f64::consts::TAU;

    fn spec() -> DomainScanSpec {
        DomainScanSpec {
            omega: vec![golden_mean()],
            tau: 1.0,
            alpha: -1.0,
            a: 5,
            r0: 1.0,
            resolution: 64,
            order: 1,
            a_budget: 0.03,
            k_probe: 1000,
        }
    }

    /// The `a` points where `lambda(eps)` hits the rotation phase at `k`.
    fn resonance_roots(spec: &DomainScanSpec, k: i32) -> Vec<Complex64> {
        let phase = Complex64::new(0.0, TAU * k as f64 * spec.omega[0]).exp();
        let w = (phase - 1.0) / spec.alpha;
        let r = w.norm().powf(1.0 / spec.a as f64);
        let arg = w.arg() / spec.a as f64;
        (0..spec.a)
            .map(|m| {
                Complex64::from_polar(r, arg + TAU * m as f64 / spec.a as f64)
            })
            .collect()
    }

    #[test]
    fn origin_is_a_member_with_vanishing_product() {
        let scan = domain_scan(&spec()).unwrap();
        let mid = scan.resolution() / 2;
        let c = scan.cell(mid, mid);
        assert_eq!(c.re_eps, 0.0);
        assert_eq!(c.im_eps, 0.0);
        assert!(c.member);
        assert_eq!(c.log_margin, f64::NEG_INFINITY);
    }

    #[test]
    fn resonance_center_cells_are_excluded() {
        let sp = spec();
        let scan = domain_scan(&sp).unwrap();
        for k in [3, 5, 8, 13] {
            for root in resonance_roots(&sp, k) {
                let c = scan.cell(sp.nearest_index(root.re), sp.nearest_index(root.im));
                assert!(
                    !c.member,
                    "cell nearest the k = {k} resonance at {root} is a member"
                );
                assert_eq!(c.log_margin, f64::INFINITY);
            }
        }
    }

    #[test]
    fn excluded_neighborhoods_shrink_with_the_resonance_order() {
        let sp = spec();
        let scan = domain_scan(&sp).unwrap();
        let fractions: Vec<f64> = [3, 5, 8, 13, 21, 34]
            .into_iter()
            .map(|k| scan.excluded_fraction(resonance_roots(&sp, k)[0], 2))
            .collect();
        for pair in fractions.windows(2) {
            assert!(
                pair[0] >= pair[1] - 1e-12,
                "excluded fractions {fractions:?} not nonincreasing"
            );
        }
        assert_eq!(fractions[0], 1.0, "low-order ball should fill its window");
        assert!(fractions[5] < 0.5, "high-order ball should be small");
    }

    #[test]
    fn membership_mask_is_conjugation_symmetric() {
        let scan = domain_scan(&spec()).unwrap();
        let res = scan.resolution();
        // the extreme -r0 row has no +r0 partner on the half-open raster
        for j in 1..res {
            for i in 0..res {
                let a = scan.cell(i, j);
                let b = scan.cell(i, res - j);
                assert_eq!(a.member, b.member, "mask asymmetry at ({i}, {j})");
                assert_eq!(
                    a.log_margin.to_bits(),
                    b.log_margin.to_bits(),
                    "margin asymmetry at ({i}, {j})"
                );
            }
        }
    }

    #[test]
    fn margin_is_locally_flat_between_members_away_from_resonances() {
        let sp = spec();
        let scan = domain_scan(&sp).unwrap();
        let res = scan.resolution();
        let dd = DiophantineData::new(&sp.omega, sp.tau, sp.k_probe).unwrap();
        let model = ConformalFactorModel::PowerLaw {
            alpha: sp.alpha,
            a: sp.a,
        };
        // A resonance curve can be far narrower than a raster cell, so a
        // member may sit on a small-divisor spike its neighbors never see;
        // continuity is only claimed away from resonances.  "Away" here:
        // the smallest divisor of lambda(eps) stays above a floor.
        let smooth = |c: &ScanCell| {
            let lam = model.factor_c(Complex64::new(c.re_eps, c.im_eps));
            dd.smallest_divisor(lam, sp.k_probe).1 >= 5e-3
        };
        let in_band = |c: &ScanCell| {
            let r = (c.re_eps * c.re_eps + c.im_eps * c.im_eps).sqrt();
            (0.25..=0.55).contains(&r)
        };
        let mut pairs = 0;
        for j in 0..res {
            for i in 0..res - 1 {
                for (a, b) in [
                    (scan.cell(i, j), scan.cell(i + 1, j)),
                    (scan.cell(j, i), scan.cell(j, i + 1)),
                ] {
                    if a.member && b.member && in_band(a) && in_band(b) && smooth(a) && smooth(b)
                    {
                        pairs += 1;
                        let jump = (a.log_margin - b.log_margin).abs();
                        assert!(
                            jump <= 1.0,
                            "margin jumped by 10^{jump:.2} between members at \
                             ({}, {}) and ({}, {})",
                            a.re_eps,
                            a.im_eps,
                            b.re_eps,
                            b.im_eps
                        );
                    }
                }
            }
        }
        assert!(pairs > 100, "band too sparse: {pairs} smooth member pairs");
    }

    #[test]
    fn zero_radius_scan_is_an_empty_raster() {
        let mut sp = spec();
        sp.r0 = 0.0;
        let scan = domain_scan(&sp).unwrap();
        assert!(scan.cells.is_empty());
        assert_eq!(scan.member_count(), 0);
    }

    #[test]
    fn undersized_rasters_are_rejected() {
        let mut sp = spec();
        sp.resolution = 32;
        assert!(matches!(domain_scan(&sp), Err(Error::Format { .. })));
    }

    #[test]
    fn csv_spells_out_infinite_margins() {
        let sp = spec();
        let scan = domain_scan(&sp).unwrap();
        let mut buf = Vec::new();
        scan.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "re_eps,im_eps,member,log_margin");
        assert!(text.contains(",inf"));
        assert!(text.contains(",-inf"));
        // a serde round trip of a cell keeps the sentinel
        let corner = serde_json::to_string(scan.cell(0, 0)).unwrap();
        assert!(corner.contains("\"inf\""));
        let back: ScanCell = serde_json::from_str(&corner).unwrap();
        assert_eq!(back.log_margin, f64::INFINITY);
    }
}
