//! Truncated Fourier series on the d-torus (d = 1 or 2) with matrix values.
//!
//! A series holds coefficients `c_k` on the box `|k|_inf <= k_max`, each a
//! complex `rows x cols` block, and represents
//!
//! ```text
//!     s(theta) = sum_k c_k exp(2 pi i k . theta)
//! ```
//!
//! Conventions used throughout the crate:
//!
//! * Grid evaluation and analysis go through the FFT on `n_g` nodes per axis
//!   (`theta_j = j / n_g`).  The default grid is `next_smooth(2 k_max + 2)`:
//!   twice-padded, so nonlinear grid operations alias only through the
//!   analytic tail of well-resolved inputs.  Products and other pointwise
//!   compositions are transformed back and truncated to the box (dealiasing);
//!   this truncation is the only approximation the layer introduces.
//! * `norm_rho` is the weighted coefficient norm `sum_k |c_k| e^{2 pi |k|_1 rho}`
//!   applied entrywise, aggregated over the value shape: plain value for
//!   scalars, Euclidean norm of entry norms for vectors, spectral norm of the
//!   nonnegative entry-norm matrix for matrices.  It dominates the sup norm on
//!   a complex strip of width `rho` and is submultiplicative, which is what
//!   the contraction and tail estimates downstream rely on.
//! * Real-valued functions are represented by conjugate-symmetric coefficient
//!   sets (`c_{-k} = conj(c_k)`).  The symmetry is an invariant to check or
//!   restore (`symmetrize_real`), never a storage assumption.

pub mod fft;
pub mod io;

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::collections::BTreeMap;
use std::f64::consts::TAU;

pub type CMat = DMatrix<Complex64>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

/// Condition-number guard for per-node inversions.
const NODE_COND_LIMIT: f64 = 1e14;
/// Relative singular-value cutoff for per-node pseudo-inverses.
const PINV_RTOL: f64 = 1e-13;

pub fn cis(x: f64) -> Complex64 {
    Complex64::new(x.cos(), x.sin())
}

pub fn to_real(m: &CMat) -> RMat {
    RMat::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)].re)
}

pub fn to_complex(m: &RMat) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |r, c| Complex64::new(m[(r, c)], 0.0))
}

/// Values of one or more stacked functions on the regular lattice
/// (`n_g` nodes per axis, row-major flat ordering).
#[derive(Debug, Clone)]
pub struct Grid {
    d: usize,
    n_g: usize,
    shape: (usize, usize),
    values: Vec<CMat>,
}

impl Grid {
    pub fn from_fn(d: usize, n_g: usize, shape: (usize, usize), mut f: impl FnMut(&[f64]) -> CMat) -> Self {
        let count = n_g.pow(d as u32);
        let values = (0..count)
            .map(|i| {
                let v = f(&fft::node_theta(i, d, n_g));
                assert_eq!((v.nrows(), v.ncols()), shape, "grid closure shape");
                v
            })
            .collect();
        Grid { d, n_g, shape, values }
    }

    /// Wrap precomputed node values (flat row-major order, one matrix per
    /// node, `n_g^d` of them).
    pub fn from_values(d: usize, n_g: usize, shape: (usize, usize), values: Vec<CMat>) -> Self {
        assert_eq!(values.len(), n_g.pow(d as u32), "grid node count");
        for v in &values {
            assert_eq!((v.nrows(), v.ncols()), shape, "grid value shape");
        }
        Grid { d, n_g, shape, values }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_g(&self) -> usize {
        self.n_g
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn node_count(&self) -> usize {
        self.values.len()
    }

    pub fn value(&self, i: usize) -> &CMat {
        &self.values[i]
    }

    pub fn theta(&self, i: usize) -> Vec<f64> {
        fft::node_theta(i, self.d, self.n_g)
    }

    pub fn values(&self) -> &[CMat] {
        &self.values
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FourierSeries {
    d: usize,
    shape: (usize, usize),
    k_max: usize,
    grid_size: usize,
    coeffs: BTreeMap<Vec<i32>, CMat>,
}

impl FourierSeries {
    pub fn zeros(d: usize, shape: (usize, usize), k_max: usize) -> Self {
        assert!(d == 1 || d == 2, "torus dimension must be 1 or 2");
        assert!(shape.0 > 0 && shape.1 > 0);
        FourierSeries {
            d,
            shape,
            k_max,
            grid_size: fft::grid_for(k_max),
            coeffs: BTreeMap::new(),
        }
    }

    pub fn constant(d: usize, value: CMat, k_max: usize) -> Self {
        let mut s = Self::zeros(d, (value.nrows(), value.ncols()), k_max);
        s.coeffs.insert(vec![0; d], value);
        s
    }

    pub fn constant_real(d: usize, value: &RMat, k_max: usize) -> Self {
        Self::constant(d, to_complex(value), k_max)
    }

    /// Build a series from explicit `(multi-index, block)` pairs.
    pub fn from_modes(d: usize, shape: (usize, usize), k_max: usize, modes: &[(Vec<i32>, CMat)]) -> Result<Self> {
        let mut s = Self::zeros(d, shape, k_max);
        for (k, v) in modes {
            s.set_coeff(k, v.clone())?;
        }
        Ok(s)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn coeff(&self, k: &[i32]) -> CMat {
        self.coeffs
            .get(k)
            .cloned()
            .unwrap_or_else(|| CMat::zeros(self.shape.0, self.shape.1))
    }

    pub fn coeff_ref(&self, k: &[i32]) -> Option<&CMat> {
        self.coeffs.get(k)
    }

    pub fn coeffs(&self) -> impl Iterator<Item = (&Vec<i32>, &CMat)> {
        self.coeffs.iter()
    }

    pub fn mode_count(&self) -> usize {
        self.coeffs.len()
    }

    pub fn set_coeff(&mut self, k: &[i32], value: CMat) -> Result<()> {
        if k.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: k.len(),
            });
        }
        if k.iter().any(|&ki| ki.unsigned_abs() as usize > self.k_max) {
            return Err(Error::IndexOutOfRange {
                k: k.to_vec(),
                k_max: self.k_max,
            });
        }
        if (value.nrows(), value.ncols()) != self.shape {
            return Err(Error::ShapeMismatch {
                expected: self.shape,
                got: (value.nrows(), value.ncols()),
            });
        }
        self.coeffs.insert(k.to_vec(), value);
        Ok(())
    }

    fn check_compatible(&self, o: &FourierSeries) -> Result<()> {
        if self.d != o.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: o.d,
            });
        }
        if self.shape != o.shape {
            return Err(Error::ShapeMismatch {
                expected: self.shape,
                got: o.shape,
            });
        }
        Ok(())
    }

    pub fn add(&self, o: &FourierSeries) -> Result<FourierSeries> {
        self.add_scaled(Complex64::new(1.0, 0.0), o)
    }

    pub fn sub(&self, o: &FourierSeries) -> Result<FourierSeries> {
        self.add_scaled(Complex64::new(-1.0, 0.0), o)
    }

    /// `self + c * o`, coefficientwise.
    pub fn add_scaled(&self, c: Complex64, o: &FourierSeries) -> Result<FourierSeries> {
        self.check_compatible(o)?;
        let mut out = self.clone();
        out.k_max = self.k_max.max(o.k_max);
        out.grid_size = fft::grid_for(out.k_max);
        for (k, v) in &o.coeffs {
            match out.coeffs.get_mut(k) {
                Some(slot) => *slot += v * c,
                None => {
                    out.coeffs.insert(k.clone(), v * c);
                }
            }
        }
        Ok(out)
    }

    pub fn scale(&self, c: Complex64) -> FourierSeries {
        let mut out = self.clone();
        for v in out.coeffs.values_mut() {
            *v *= c;
        }
        out
    }

    /// Composition with the rigid translation `theta -> theta + alpha`:
    /// multiplies each coefficient by `exp(2 pi i k . alpha)`.
    pub fn shift(&self, alpha: &[f64]) -> FourierSeries {
        assert_eq!(alpha.len(), self.d, "shift offset dimension");
        let mut out = self.clone();
        for (k, v) in out.coeffs.iter_mut() {
            let phase: f64 = k.iter().zip(alpha).map(|(&ki, &ai)| ki as f64 * ai).sum();
            *v *= cis(TAU * phase);
        }
        out
    }

    /// Partial derivative along one torus axis; the zero mode is annihilated.
    pub fn derivative(&self, axis: usize) -> FourierSeries {
        assert!(axis < self.d, "derivative axis out of range");
        let mut out = self.clone();
        out.coeffs.retain(|k, _| k[axis] != 0);
        for (k, v) in out.coeffs.iter_mut() {
            *v *= Complex64::new(0.0, TAU * k[axis] as f64);
        }
        out
    }

    pub fn average(&self) -> CMat {
        self.coeff(&vec![0; self.d])
    }

    /// The zero-average part (drops the `k = 0` coefficient).
    pub fn zero_average(&self) -> FourierSeries {
        let mut out = self.clone();
        out.coeffs.remove(&vec![0; self.d]);
        out
    }

    pub fn transpose(&self) -> FourierSeries {
        let mut out = FourierSeries::zeros(self.d, (self.shape.1, self.shape.0), self.k_max);
        for (k, v) in &self.coeffs {
            out.coeffs.insert(k.clone(), v.transpose());
        }
        out
    }

    /// Change the truncation box, dropping or admitting modes as needed.
    pub fn resample(&self, k_max: usize) -> FourierSeries {
        let mut out = FourierSeries::zeros(self.d, self.shape, k_max);
        for (k, v) in &self.coeffs {
            if k.iter().all(|&ki| ki.unsigned_abs() as usize <= k_max) {
                out.coeffs.insert(k.clone(), v.clone());
            }
        }
        out
    }

    /// Weighted coefficient norm with analyticity weight `e^{2 pi |k|_1 rho}`,
    /// aggregated over the value shape (see module docs).  Returns `+inf` when
    /// the weighted sum overflows.
    pub fn norm_rho(&self, rho: f64) -> f64 {
        let (r, c) = self.shape;
        let mut entry = RMat::zeros(r, c);
        for (k, v) in &self.coeffs {
            let order: f64 = k.iter().map(|&ki| ki.unsigned_abs() as f64).sum();
            let w = (TAU * order * rho).exp();
            for i in 0..r {
                for j in 0..c {
                    entry[(i, j)] += v[(i, j)].norm() * w;
                }
            }
        }
        if entry.iter().any(|x| !x.is_finite()) {
            return f64::INFINITY;
        }
        if r == 1 && c == 1 {
            entry[(0, 0)]
        } else if c == 1 {
            entry.column(0).norm()
        } else if r == 1 {
            entry.row(0).norm()
        } else {
            entry.svd(false, false).singular_values[0]
        }
    }

    /// Evaluate on the regular lattice with `n_g` nodes per axis via the FFT.
    pub fn eval_grid(&self, n_g: usize) -> Result<Grid> {
        if n_g < 2 * self.k_max + 1 {
            return Err(Error::GridTooSmall {
                n_g,
                k_max: self.k_max,
            });
        }
        let (rows, cols) = self.shape;
        let count = n_g.pow(self.d as u32);
        let mut values = vec![CMat::zeros(rows, cols); count];
        let mut lattice = vec![Complex64::default(); count];
        for r in 0..rows {
            for c in 0..cols {
                lattice.fill(Complex64::default());
                for (k, v) in &self.coeffs {
                    let mut flat = 0usize;
                    for &ki in k {
                        flat = flat * n_g + fft::bin_of(ki, n_g);
                    }
                    lattice[flat] = v[(r, c)];
                }
                fft::lattice_fft(&mut lattice, self.d, n_g, true);
                for (i, value) in lattice.iter().enumerate() {
                    values[i][(r, c)] = *value;
                }
            }
        }
        Ok(Grid {
            d: self.d,
            n_g,
            shape: self.shape,
            values,
        })
    }

    /// Analyze grid values back into coefficients, keeping `|k|_inf <= k_max`.
    pub fn from_grid(grid: &Grid, k_max: usize) -> Result<FourierSeries> {
        if grid.n_g < 2 * k_max + 1 {
            return Err(Error::GridTooSmall {
                n_g: grid.n_g,
                k_max,
            });
        }
        let (rows, cols) = grid.shape;
        let count = grid.values.len();
        let scale = 1.0 / count as f64;
        let mut out = FourierSeries::zeros(grid.d, grid.shape, k_max);
        let mut lattice = vec![Complex64::default(); count];
        let mut blocks: BTreeMap<Vec<i32>, CMat> = BTreeMap::new();
        fft::for_each_mode(grid.d, k_max, |k| {
            blocks.insert(k.to_vec(), CMat::zeros(rows, cols));
        });
        for r in 0..rows {
            for c in 0..cols {
                for (i, v) in grid.values.iter().enumerate() {
                    lattice[i] = v[(r, c)];
                }
                fft::lattice_fft(&mut lattice, grid.d, grid.n_g, false);
                for (k, block) in blocks.iter_mut() {
                    let mut flat = 0usize;
                    for &ki in k {
                        flat = flat * grid.n_g + fft::bin_of(ki, grid.n_g);
                    }
                    block[(r, c)] = lattice[flat] * scale;
                }
            }
        }
        out.coeffs = blocks;
        Ok(out)
    }

    /// Round trip through the default grid, truncating products of the
    /// closure `f` of several series back to `out_k_max` (dealiasing).
    ///
    /// The closure receives the flat node index (for error reporting) and one
    /// value per input series, all evaluated on a common lattice.
    pub fn pointwise_apply<F>(
        args: &[&FourierSeries],
        out_shape: (usize, usize),
        out_k_max: usize,
        mut f: F,
    ) -> Result<FourierSeries>
    where
        F: FnMut(usize, &[&CMat]) -> Result<CMat>,
    {
        assert!(!args.is_empty(), "pointwise_apply needs at least one input");
        let d = args[0].d;
        for a in args {
            if a.d != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: a.d,
                });
            }
        }
        let k_big = args.iter().map(|a| a.k_max).max().unwrap().max(out_k_max);
        let n_g = fft::grid_for(k_big);
        let grids: Vec<Grid> = args
            .iter()
            .map(|a| a.eval_grid(n_g))
            .collect::<Result<_>>()?;
        let count = n_g.pow(d as u32);
        let mut values = Vec::with_capacity(count);
        let mut slots: Vec<&CMat> = Vec::with_capacity(args.len());
        for i in 0..count {
            slots.clear();
            for g in &grids {
                slots.push(g.value(i));
            }
            let v = f(i, &slots)?;
            if (v.nrows(), v.ncols()) != out_shape {
                return Err(Error::ShapeMismatch {
                    expected: out_shape,
                    got: (v.nrows(), v.ncols()),
                });
            }
            values.push(v);
        }
        let grid = Grid {
            d,
            n_g,
            shape: out_shape,
            values,
        };
        FourierSeries::from_grid(&grid, out_k_max)
    }

    /// Pointwise matrix product `self(theta) * rhs(theta)`, dealiased to the
    /// larger of the two truncation boxes.
    pub fn matmul(&self, rhs: &FourierSeries) -> Result<FourierSeries> {
        if self.shape.1 != rhs.shape.0 {
            return Err(Error::ShapeMismatch {
                expected: (self.shape.1, self.shape.1),
                got: rhs.shape,
            });
        }
        if self.d != rhs.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: rhs.d,
            });
        }
        let out_shape = (self.shape.0, rhs.shape.1);
        let out_k = self.k_max.max(rhs.k_max);
        FourierSeries::pointwise_apply(&[self, rhs], out_shape, out_k, |_, v| Ok(v[0] * v[1]))
    }

    /// Per-node inverse of a square-matrix-valued series, with a condition
    /// guard that reports the offending node.
    pub fn inverse_nodewise(&self) -> Result<FourierSeries> {
        assert_eq!(self.shape.0, self.shape.1, "inverse needs square values");
        FourierSeries::pointwise_apply(&[self], self.shape, self.k_max, |node, v| {
            invert_guarded(v[0], node)
        })
    }

    /// Per-node Moore-Penrose pseudo-inverse (tall or square full-rank values).
    pub fn pinv_nodewise(&self) -> Result<FourierSeries> {
        let out_shape = (self.shape.1, self.shape.0);
        FourierSeries::pointwise_apply(&[self], out_shape, self.k_max, |node, v| {
            pinv_guarded(v[0], node)
        })
    }

    /// Extract a block of the value matrix, as a series.
    pub fn block(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> FourierSeries {
        assert!(rows.end <= self.shape.0 && cols.end <= self.shape.1);
        let shape = (rows.len(), cols.len());
        let mut out = FourierSeries::zeros(self.d, shape, self.k_max);
        for (k, v) in &self.coeffs {
            out.coeffs.insert(
                k.clone(),
                v.view((rows.start, cols.start), shape).into_owned(),
            );
        }
        out
    }

    /// Stack column blocks side by side: `[a | b | ...]`.
    pub fn hstack(parts: &[&FourierSeries]) -> Result<FourierSeries> {
        assert!(!parts.is_empty());
        let d = parts[0].d;
        let rows = parts[0].shape.0;
        let mut cols = 0usize;
        let mut k_max = 0usize;
        for p in parts {
            if p.d != d {
                return Err(Error::DimensionMismatch { expected: d, got: p.d });
            }
            if p.shape.0 != rows {
                return Err(Error::ShapeMismatch {
                    expected: (rows, p.shape.1),
                    got: p.shape,
                });
            }
            cols += p.shape.1;
            k_max = k_max.max(p.k_max);
        }
        let mut out = FourierSeries::zeros(d, (rows, cols), k_max);
        for (idx, p) in parts.iter().enumerate() {
            let offset: usize = parts[..idx].iter().map(|q| q.shape.1).sum();
            for (k, v) in &p.coeffs {
                let slot = out
                    .coeffs
                    .entry(k.clone())
                    .or_insert_with(|| CMat::zeros(rows, cols));
                slot.view_mut((0, offset), p.shape).copy_from(v);
            }
        }
        Ok(out)
    }

    /// Stack row blocks on top of each other.
    pub fn vstack(parts: &[&FourierSeries]) -> Result<FourierSeries> {
        let transposed: Vec<FourierSeries> = parts.iter().map(|p| p.transpose()).collect();
        let refs: Vec<&FourierSeries> = transposed.iter().collect();
        Ok(FourierSeries::hstack(&refs)?.transpose())
    }

    /// Deviation from the conjugate symmetry `c_{-k} = conj(c_k)` of real
    /// functions (max absolute entry over all mode pairs).
    pub fn real_symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, v) in &self.coeffs {
            let neg: Vec<i32> = k.iter().map(|&ki| -ki).collect();
            let other = self.coeff(&neg);
            for i in 0..self.shape.0 {
                for j in 0..self.shape.1 {
                    worst = worst.max((v[(i, j)] - other[(i, j)].conj()).norm());
                }
            }
        }
        worst
    }

    /// Project onto the conjugate-symmetric (real-function) part:
    /// `c_k <- (c_k + conj(c_{-k})) / 2`.
    pub fn symmetrize_real(&self) -> FourierSeries {
        let mut out = FourierSeries::zeros(self.d, self.shape, self.k_max);
        let mut keys: std::collections::BTreeSet<Vec<i32>> = std::collections::BTreeSet::new();
        for k in self.coeffs.keys() {
            keys.insert(k.clone());
            keys.insert(k.iter().map(|&ki| -ki).collect());
        }
        for k in keys {
            let neg: Vec<i32> = k.iter().map(|&ki| -ki).collect();
            let a = self.coeff(&k);
            let b = self.coeff(&neg);
            let half = Complex64::new(0.5, 0.0);
            let sym = CMat::from_fn(self.shape.0, self.shape.1, |i, j| {
                (a[(i, j)] + b[(i, j)].conj()) * half
            });
            out.coeffs.insert(k, sym);
        }
        out
    }

    /// Largest value 2-norm over the default grid (a sup-norm estimate).
    pub fn sup_node_norm(&self) -> Result<f64> {
        let grid = self.eval_grid(self.grid_size.max(2 * self.k_max + 1))?;
        let mut worst: f64 = 0.0;
        for v in grid.values() {
            let m = if self.shape.1 == 1 {
                v.column(0).norm()
            } else {
                to_real(&CMat::from_fn(v.nrows(), v.ncols(), |i, j| {
                    Complex64::new(v[(i, j)].norm(), 0.0)
                }))
                .svd(false, false)
                .singular_values[0]
            };
            worst = worst.max(m);
        }
        Ok(worst)
    }

    /// Largest coefficient entry magnitude (cheap diagnostic).
    pub fn max_coeff_norm(&self) -> f64 {
        self.coeffs
            .values()
            .flat_map(|v| v.iter())
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

fn invert_guarded(m: &CMat, node: usize) -> Result<CMat> {
    let svd = m.clone().svd(false, false);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let smin = sv.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !cond.is_finite() || cond > NODE_COND_LIMIT {
        return Err(Error::SingularNode { node, cond });
    }
    m.clone()
        .try_inverse()
        .ok_or(Error::SingularNode { node, cond })
}

fn pinv_guarded(m: &CMat, node: usize) -> Result<CMat> {
    let svd = m.clone().svd(false, false);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let smin = sv.min();
    if smin <= PINV_RTOL * smax {
        let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        return Err(Error::SingularNode { node, cond });
    }
    // (A* A)^{-1} A*  -- values here are small and well conditioned.
    let at = m.adjoint();
    let gram = &at * m;
    let inv = gram.try_inverse().ok_or(Error::SingularNode {
        node,
        cond: smax / smin,
    })?;
    Ok(inv * at)
}

#[cfg(test)]
mod tests {
    use super::*;
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

    /// Independent O(N K) evaluation oracle: direct mode summation.
    fn eval_direct(s: &FourierSeries, theta: &[f64]) -> CMat {
        let mut acc = CMat::zeros(s.shape().0, s.shape().1);
        for (k, v) in s.coeffs() {
            let phase: f64 = k.iter().zip(theta).map(|(&ki, &ti)| ki as f64 * ti).sum();
            acc += v * cis(TAU * phase);
        }
        acc
    }

    fn random_real_scalar(seed: u64, d: usize, k_max: usize) -> FourierSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = FourierSeries::zeros(d, (1, 1), k_max);
        fft::for_each_mode(d, k_max, |k| {
            if k.iter().all(|&ki| ki == 0) {
                return;
            }
            let v = c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            s.set_coeff(k, scalar(v)).unwrap();
        });
        s.set_coeff(&vec![0; d], scalar(c(0.3, 0.0))).unwrap();
        s.symmetrize_real()
    }

    #[test]
    fn eval_grid_matches_direct_summation() {
        for d in [1, 2] {
            let s = random_real_scalar(7, d, 5);
            let n_g = fft::grid_for(5);
            let grid = s.eval_grid(n_g).unwrap();
            for i in (0..grid.node_count()).step_by(3) {
                let oracle = eval_direct(&s, &grid.theta(i));
                assert!((grid.value(i)[(0, 0)] - oracle[(0, 0)]).norm() < 1e-12, "d={d} node {i}");
            }
        }
    }

    #[test]
    fn grid_round_trip_reproduces_coefficients() {
        for d in [1, 2] {
            let s = random_real_scalar(11, d, 6);
            let grid = s.eval_grid(fft::grid_for(6)).unwrap();
            let back = FourierSeries::from_grid(&grid, 6).unwrap();
            fft::for_each_mode(d, 6, |k| {
                let diff = (s.coeff(k) - back.coeff(k)).map(|z| z.norm()).max();
                assert!(diff < 1e-12, "d={d} mode {k:?}");
            });
        }
    }

    #[test]
    fn grid_too_small_is_rejected() {
        let s = random_real_scalar(3, 1, 8);
        assert!(matches!(
            s.eval_grid(16),
            Err(Error::GridTooSmall { n_g: 16, k_max: 8 })
        ));
    }

    #[test]
    fn product_of_constants() {
        let a = FourierSeries::constant(1, scalar(c(2.0, 0.0)), 0);
        let b = FourierSeries::constant(1, scalar(c(3.0, 0.0)), 0);
        let p = a.matmul(&b).unwrap();
        assert_abs_diff_eq!(p.average()[(0, 0)].re, 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.average()[(0, 0)].im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn product_cosine_squared_trig_identity() {
        // cos(2 pi theta) has c_{+-1} = 1/2; its square must come out as
        // 1/2 + cos(4 pi theta)/2, i.e. c_0 = 1/2 and c_{+-2} = 1/4.
        let mut cos = FourierSeries::zeros(1, (1, 1), 2);
        cos.set_coeff(&[1], scalar(c(0.5, 0.0))).unwrap();
        cos.set_coeff(&[-1], scalar(c(0.5, 0.0))).unwrap();
        let sq = cos.matmul(&cos).unwrap();
        assert_abs_diff_eq!(sq.coeff(&[0])[(0, 0)].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(sq.coeff(&[2])[(0, 0)].re, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(sq.coeff(&[-2])[(0, 0)].re, 0.25, epsilon = 1e-15);
        assert!(sq.coeff(&[1])[(0, 0)].norm() < 1e-15);
    }

    #[test]
    fn dealiased_product_matches_convolution_for_resolved_inputs() {
        // Support |k| <= 32 inside a K_max = 64 box: the full product band
        // (|k| <= 64) fits, so the grid product must equal the exact
        // convolution coefficient by coefficient.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut a = FourierSeries::zeros(1, (1, 1), 64);
        let mut b = FourierSeries::zeros(1, (1, 1), 64);
        for k in -32..=32i32 {
            a.set_coeff(&[k], scalar(c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))))
                .unwrap();
            b.set_coeff(&[k], scalar(c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))))
                .unwrap();
        }
        let p = a.matmul(&b).unwrap();
        for k in -64..=64i32 {
            let mut conv = Complex64::default();
            for m in -32..=32i32 {
                let r = k - m;
                if (-32..=32).contains(&r) {
                    conv += a.coeff(&[m])[(0, 0)] * b.coeff(&[r])[(0, 0)];
                }
            }
            assert!((p.coeff(&[k])[(0, 0)] - conv).norm() < 1e-11, "mode {k}");
        }
    }

    #[test]
    fn shift_single_mode_quarter_turn() {
        // c_1 = 1 shifted by 1/4 must become e^{i pi / 2} = i.
        let mut s = FourierSeries::zeros(1, (1, 1), 1);
        s.set_coeff(&[1], scalar(c(1.0, 0.0))).unwrap();
        let t = s.shift(&[0.25]);
        let v = t.coeff(&[1])[(0, 0)];
        assert!((v - c(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn shift_composes_and_preserves_norms() {
        let s = random_real_scalar(5, 1, 10);
        let a = 0.31;
        let b = 0.47;
        let lhs = s.shift(&[a]).shift(&[b]);
        let rhs = s.shift(&[a + b]);
        for k in -10..=10i32 {
            assert!((lhs.coeff(&[k])[(0, 0)] - rhs.coeff(&[k])[(0, 0)]).norm() < 1e-13);
        }
        for rho in [0.0, 0.05, 0.1] {
            assert_abs_diff_eq!(s.shift(&[a]).norm_rho(rho), s.norm_rho(rho), epsilon = 1e-10);
        }
    }

    #[test]
    fn derivative_of_cosine_and_zero_mode() {
        let mut s = FourierSeries::zeros(1, (1, 1), 1);
        s.set_coeff(&[1], scalar(c(0.5, 0.0))).unwrap();
        s.set_coeff(&[-1], scalar(c(0.5, 0.0))).unwrap();
        s.set_coeff(&[0], scalar(c(4.0, 0.0))).unwrap();
        let ds = s.derivative(0);
        // d/dtheta cos(2 pi theta) = -2 pi sin(2 pi theta); the constant dies.
        assert!(ds.coeff_ref(&[0]).is_none());
        let grid = ds.eval_grid(8).unwrap();
        for i in 0..8 {
            let theta = grid.theta(i)[0];
            let oracle = -TAU * (TAU * theta).sin();
            assert_abs_diff_eq!(grid.value(i)[(0, 0)].re, oracle, epsilon = 1e-12);
        }
    }

    #[test]
    fn norm_rho_weighted_pair_of_modes() {
        // c_{+-1} = 1/2 at rho = 0.1: 2 * (1/2) * e^{2 pi * 0.1} = e^{0.2 pi}.
        let mut s = FourierSeries::zeros(1, (1, 1), 1);
        s.set_coeff(&[1], scalar(c(0.5, 0.0))).unwrap();
        s.set_coeff(&[-1], scalar(c(0.5, 0.0))).unwrap();
        let expect = (0.2 * std::f64::consts::PI).exp();
        assert_abs_diff_eq!(s.norm_rho(0.1), expect, epsilon = 1e-12 * expect);
        assert_abs_diff_eq!(s.norm_rho(0.0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn norm_rho_overflows_to_infinity() {
        let mut s = FourierSeries::zeros(1, (1, 1), 64);
        s.set_coeff(&[64], scalar(c(1.0, 0.0))).unwrap();
        assert_eq!(s.norm_rho(2.0), f64::INFINITY);
    }

    #[test]
    fn matrix_norm_aggregation_is_spectral() {
        // Constant 2x2 matrix: norm_rho(0) must be its largest singular value.
        let m = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        let s = FourierSeries::constant(1, m, 0);
        let oracle = RMat::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0])
            .svd(false, false)
            .singular_values[0];
        assert_abs_diff_eq!(s.norm_rho(0.0), oracle, epsilon = 1e-13);
    }

    #[test]
    fn nodewise_inverse_flags_singular_node() {
        // s(theta) = sin(2 pi theta) vanishes at theta = 0 (node 0).
        let mut s = FourierSeries::zeros(1, (1, 1), 4);
        s.set_coeff(&[1], scalar(c(0.0, -0.5))).unwrap();
        s.set_coeff(&[-1], scalar(c(0.0, 0.5))).unwrap();
        match s.inverse_nodewise() {
            Err(Error::SingularNode { node, .. }) => assert_eq!(node, 0),
            other => panic!("expected SingularNode, got {other:?}"),
        }
    }

    #[test]
    fn stacking_and_blocks_round_trip() {
        let a = random_real_scalar(1, 1, 3);
        let b = random_real_scalar(2, 1, 3);
        let v = FourierSeries::vstack(&[&a, &b]).unwrap();
        assert_eq!(v.shape(), (2, 1));
        let a_back = v.block(0..1, 0..1);
        let b_back = v.block(1..2, 0..1);
        for k in -3..=3i32 {
            assert!((a.coeff(&[k])[(0, 0)] - a_back.coeff(&[k])[(0, 0)]).norm() < 1e-15);
            assert!((b.coeff(&[k])[(0, 0)] - b_back.coeff(&[k])[(0, 0)]).norm() < 1e-15);
        }
        let h = FourierSeries::hstack(&[&a, &b]).unwrap();
        assert_eq!(h.shape(), (1, 2));
    }

    #[test]
    fn real_symmetry_check_and_projection() {
        let mut s = FourierSeries::zeros(1, (1, 1), 2);
        s.set_coeff(&[1], scalar(c(0.5, 0.25))).unwrap();
        s.set_coeff(&[-1], scalar(c(0.5, -0.25))).unwrap();
        assert!(s.real_symmetry_defect() < 1e-15);
        s.set_coeff(&[2], scalar(c(0.1, 0.0))).unwrap();
        assert!(s.real_symmetry_defect() > 0.09);
        let sym = s.symmetrize_real();
        assert!(sym.real_symmetry_defect() < 1e-15);
        // Grid values of a symmetric series are real.
        let grid = sym.eval_grid(8).unwrap();
        for v in grid.values() {
            assert!(v[(0, 0)].im.abs() < 1e-13);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        /// Parseval: mean of |f|^2 on the grid equals the coefficient energy.
        #[test]
        fn parseval_on_default_grid(seed in 0u64..500) {
            let s = random_real_scalar(seed, 1, 8);
            let grid = s.eval_grid(fft::grid_for(8)).unwrap();
            let mean_sq: f64 = grid.values().iter().map(|v| v[(0, 0)].norm_sqr()).sum::<f64>()
                / grid.node_count() as f64;
            let energy: f64 = s.coeffs().map(|(_, v)| v[(0, 0)].norm_sqr()).sum();
            prop_assert!((mean_sq - energy).abs() < 1e-10 * (1.0 + energy));
        }

        /// Triangle inequality and submultiplicativity of the weighted norm
        /// (inputs band-limited so the grid product is exact).
        #[test]
        fn norm_rho_is_an_algebra_norm(sa in 0u64..200, sb in 0u64..200, rho in 0.0f64..0.08) {
            let a = random_real_scalar(sa, 1, 5).resample(12);
            let b = random_real_scalar(sb.wrapping_add(1000), 1, 5).resample(12);
            let sum = a.add(&b).unwrap();
            prop_assert!(sum.norm_rho(rho) <= a.norm_rho(rho) + b.norm_rho(rho) + 1e-9);
            let prod = a.matmul(&b).unwrap();
            prop_assert!(prod.norm_rho(rho) <= a.norm_rho(rho) * b.norm_rho(rho) + 1e-9);
        }

        /// Differentiating the shifted series equals shifting the derivative.
        #[test]
        fn derivative_commutes_with_shift(seed in 0u64..200, alpha in -0.5f64..0.5) {
            let s = random_real_scalar(seed, 1, 6);
            let lhs = s.shift(&[alpha]).derivative(0);
            let rhs = s.derivative(0).shift(&[alpha]);
            for k in -6..=6i32 {
                prop_assert!((lhs.coeff(&[k])[(0,0)] - rhs.coeff(&[k])[(0,0)]).norm() < 1e-12);
            }
        }
    }
}
