//! Stable/center/unstable splittings along an invariant torus.
//!
//! A splitting is carried in graph form: a fixed reference frame `T(theta)`
//! whose columns are grouped `[stable | center | unstable]`, plus one graph
//! coefficient series per bundle.  The bundle `E^sigma` is spanned by
//! `T * [I; A^sigma]` — identity on the bundle's own columns, the graph on
//! the complementary ones (complement rows kept in (s, c, u) order).  Working
//! in the frame keeps the refinement equations linear-plus-quadratic in the
//! graphs.
//!
//! Three computations live here:
//!
//! * the invariance defect: how much the transfer matrix `gamma` leaks
//!   between the labelled bundles, measured through the projections;
//! * `close_splitting`: a Jacobi-style contraction on the graphs that drives
//!   the defect to tolerance (stable graphs are updated backward, unstable
//!   forward, center rows split both ways);
//! * `estimate_rates`: least-squares exponents of restricted transfer
//!   products, giving the four trichotomy rates and a uniform prefactor.
//!
//! Slopes are fitted on the log of the *geometric mean* over grid nodes of
//! the restricted norms.  For one-dimensional bundles the Birkhoff sums
//! telescope, so the fit recovers the averaged rate to quadrature accuracy —
//! sup-based fits wobble at the 1e-2 level from the angular prefactor, which
//! is too coarse for the pairing checks downstream.  The prefactor `C0` is
//! taken from the sup-over-nodes data, where it belongs.

use crate::error::{Error, Result};
use crate::fourier::{CMat, FourierSeries, Grid, RMat, RVec};
use crate::models::{KickedFamily, MapFamily};
use serde::{Deserialize, Serialize};

/// Bundle label, in the fixed (stable, center, unstable) order used for
/// frame columns and graph rows everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bundle {
    Stable,
    Center,
    Unstable,
}

impl Bundle {
    pub const ALL: [Bundle; 3] = [Bundle::Stable, Bundle::Center, Bundle::Unstable];

    fn index(self) -> usize {
        match self {
            Bundle::Stable => 0,
            Bundle::Center => 1,
            Bundle::Unstable => 2,
        }
    }
}

/// Quasi-periodic linear cocycle over the rotation: the series
/// `gamma(theta) = Df(K(theta))` together with the rotation vector.
#[derive(Debug, Clone)]
pub struct Cocycle {
    gamma: FourierSeries,
    omega: Vec<f64>,
}

impl Cocycle {
    pub fn new(gamma: FourierSeries, omega: &[f64]) -> Result<Self> {
        let (rows, cols) = gamma.shape();
        if rows != cols || rows % 2 != 0 {
            return Err(Error::ShapeMismatch {
                expected: (rows, rows),
                got: (rows, cols),
            });
        }
        if gamma.d() != omega.len() {
            return Err(Error::DimensionMismatch {
                expected: gamma.d(),
                got: omega.len(),
            });
        }
        Ok(Cocycle {
            gamma,
            omega: omega.to_vec(),
        })
    }

    /// Build the cocycle along a torus `K(theta) = lift(theta) + periodic(theta)`
    /// from the family's Jacobian.  The lift adds `theta_i` to the first `d`
    /// angle coordinates, the standard chart for rotational tori.
    pub fn along_torus(
        family: &impl MapFamily,
        periodic: &FourierSeries,
        mu: &RVec,
        eps: f64,
        omega: &[f64],
    ) -> Result<Self> {
        let gamma = series_along_torus(periodic, |z| family.jacobian(z, mu, eps))?;
        Cocycle::new(gamma, omega)
    }

    pub fn gamma(&self) -> &FourierSeries {
        &self.gamma
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn d(&self) -> usize {
        self.omega.len()
    }

    /// Phase-space dimension over 2.
    pub fn n(&self) -> usize {
        self.gamma.shape().0 / 2
    }

    /// Rotation shift `m * omega`.
    fn step(&self, m: i64) -> Vec<f64> {
        self.omega.iter().map(|w| m as f64 * w).collect()
    }

    /// The transfer matrix `Gamma^j(theta) = gamma(theta + (j-1) omega) ... gamma(theta)`
    /// as a series (`j = 0` gives the identity).
    pub fn transfer_series(&self, j: usize) -> Result<FourierSeries> {
        let dim = 2 * self.n();
        let mut acc =
            FourierSeries::constant_real(self.gamma.d(), &RMat::identity(dim, dim), 0);
        for m in 0..j {
            acc = self.gamma.shift(&self.step(m as i64)).matmul(&acc)?;
        }
        Ok(acc)
    }
}

/// Evaluate a pointwise matrix function of the torus embedding
/// `K(theta) = lift(theta) + periodic(theta)` into a series with the same
/// truncation as the periodic part.  The lift adds `theta_i` to the first
/// `d` coordinates of the value.
pub fn series_along_torus(
    periodic: &FourierSeries,
    mut f: impl FnMut(&RVec) -> RMat,
) -> Result<FourierSeries> {
    let d = periodic.d();
    let k_max = periodic.k_max();
    let n_g = crate::fourier::fft::grid_for(k_max);
    let nodes = periodic.eval_grid(n_g)?;
    let mut values = Vec::with_capacity(nodes.node_count());
    let mut shape = (0, 0);
    for i in 0..nodes.node_count() {
        let theta = nodes.theta(i);
        let v = nodes.value(i);
        let mut z = RVec::from_fn(v.nrows(), |r, _| v[(r, 0)].re);
        for (axis, t) in theta.iter().enumerate().take(d) {
            z[axis] += *t;
        }
        let m = f(&z);
        shape = (m.nrows(), m.ncols());
        values.push(crate::fourier::to_complex(&m));
    }
    FourierSeries::from_grid(&Grid::from_values(d, n_g, shape, values), k_max)
}

/// The splitting: reference frame, graph coefficients, and the cached bundle
/// bases and projections derived from them.
#[derive(Debug, Clone)]
pub struct Splitting {
    n: usize,
    d: usize,
    reference: FourierSeries,
    graphs: [FourierSeries; 3],
    bases: [FourierSeries; 3],
    projections: [FourierSeries; 3],
    projection_norms: [f64; 3],
}

impl Splitting {
    /// Assemble a splitting from a frame and graph coefficients, building the
    /// bases `V^sigma = T [I; A^sigma]` and the projections
    /// `Pi^sigma = V^sigma (T~^{-1})_{sigma rows}` where `T~ = [V^s V^c V^u]`.
    pub fn new(
        d: usize,
        reference: FourierSeries,
        a_s: FourierSeries,
        a_c: FourierSeries,
        a_u: FourierSeries,
    ) -> Result<Self> {
        let (rows, cols) = reference.shape();
        if rows != cols || rows % 2 != 0 {
            return Err(Error::ShapeMismatch {
                expected: (rows, rows),
                got: (rows, cols),
            });
        }
        let n = rows / 2;
        let (ds, dc, du) = block_dims(n, d);
        for (graph, want) in [
            (&a_s, (dc + du, ds)),
            (&a_c, (ds + du, dc)),
            (&a_u, (ds + dc, du)),
        ] {
            if graph.shape() != want {
                return Err(Error::ShapeMismatch {
                    expected: want,
                    got: graph.shape(),
                });
            }
        }
        let dd = reference.d();
        let eye = |m: usize| FourierSeries::constant_real(dd, &RMat::identity(m, m), 0);

        // Column selectors [I; A] with rows in (s, c, u) order.
        let b_s = FourierSeries::vstack(&[&eye(ds), &a_s])?;
        let b_c = FourierSeries::vstack(&[
            &a_c.block(0..ds, 0..dc),
            &eye(dc),
            &a_c.block(ds..ds + du, 0..dc),
        ])?;
        let b_u = FourierSeries::vstack(&[&a_u, &eye(du)])?;
        let bases = [
            reference.matmul(&b_s)?,
            reference.matmul(&b_c)?,
            reference.matmul(&b_u)?,
        ];

        let frame = FourierSeries::hstack(&[&bases[0], &bases[1], &bases[2]])?;
        let frame_inv = frame.inverse_nodewise().map_err(degenerate)?;
        let row_ranges = [0..ds, ds..ds + dc, ds + dc..2 * n];
        let mut projections = Vec::with_capacity(3);
        let mut projection_norms = [0.0; 3];
        for (i, range) in row_ranges.into_iter().enumerate() {
            let p = bases[i].matmul(&frame_inv.block(range, 0..2 * n))?;
            projection_norms[i] = p.sup_node_norm()?;
            projections.push(p);
        }
        let projections: [FourierSeries; 3] = match projections.try_into() {
            Ok(p) => p,
            Err(_) => unreachable!(),
        };
        Ok(Splitting {
            n,
            d,
            reference,
            graphs: [a_s, a_c, a_u],
            bases,
            projections,
            projection_norms,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Dimensions (stable, center, unstable).
    pub fn dims(&self) -> (usize, usize, usize) {
        block_dims(self.n, self.d)
    }

    pub fn reference(&self) -> &FourierSeries {
        &self.reference
    }

    pub fn graph(&self, b: Bundle) -> &FourierSeries {
        &self.graphs[b.index()]
    }

    pub fn basis(&self, b: Bundle) -> &FourierSeries {
        &self.bases[b.index()]
    }

    pub fn projection(&self, b: Bundle) -> &FourierSeries {
        &self.projections[b.index()]
    }

    /// Sup-node operator norms of the three projections, recorded at
    /// construction (uniform boundedness diagnostic).
    pub fn projection_norms(&self) -> [f64; 3] {
        self.projection_norms
    }

    /// Worst deviation from `Pi Pi = Pi` and `sum Pi = Id` over nodes.
    pub fn projection_defect(&self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        let mut sum = self.projections[0].add(&self.projections[1])?;
        sum = sum.add(&self.projections[2])?;
        let eye = FourierSeries::constant_real(
            self.reference.d(),
            &RMat::identity(2 * self.n, 2 * self.n),
            0,
        );
        worst = worst.max(sum.sub(&eye)?.sup_node_norm()?);
        for p in &self.projections {
            worst = worst.max(p.matmul(p)?.sub(p)?.sup_node_norm()?);
        }
        Ok(worst)
    }

    /// Distance between splittings: the max over bundles and grid nodes of
    /// the spectral norm of the projection difference.
    pub fn distance_to(&self, other: &Splitting) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for b in Bundle::ALL {
            let diff = self.projection(b).sub(other.projection(b))?;
            worst = worst.max(diff.sup_node_norm()?);
        }
        Ok(worst)
    }
}

/// Serialized form: frame and graphs only.  The bases and projections are
/// derived data and are rebuilt through [`Splitting::new`] on load, so a
/// deserialized splitting always satisfies the construction invariants.
#[derive(Serialize, Deserialize)]
struct SplittingData {
    d: usize,
    reference: FourierSeries,
    a_s: FourierSeries,
    a_c: FourierSeries,
    a_u: FourierSeries,
}

impl Serialize for Splitting {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Borrowed<'a> {
            d: usize,
            reference: &'a FourierSeries,
            a_s: &'a FourierSeries,
            a_c: &'a FourierSeries,
            a_u: &'a FourierSeries,
        }
        Borrowed {
            d: self.d,
            reference: &self.reference,
            a_s: &self.graphs[0],
            a_c: &self.graphs[1],
            a_u: &self.graphs[2],
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Splitting {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let data = SplittingData::deserialize(d)?;
        Splitting::new(data.d, data.reference, data.a_s, data.a_c, data.a_u)
            .map_err(serde::de::Error::custom)
    }
}

fn block_dims(n: usize, d: usize) -> (usize, usize, usize) {
    (n - d, 2 * d, n - d)
}

fn degenerate(e: Error) -> Error {
    match e {
        Error::SingularNode { node, cond } => Error::DegenerateSplitting { node, cond },
        other => other,
    }
}

/// The exactly invariant splitting of the uncoupled product map: center along
/// the rotational `(x, p)` plane, stable/unstable along the eigenlines of the
/// hyperbolic `(y, q)` factor.  Graphs are zero; the frame is constant.
pub fn product_splitting(family: &KickedFamily) -> Result<Splitting> {
    if family.eps_c() != 0.0 {
        return Err(Error::NotUncoupled {
            eps: family.eps_c(),
        });
    }
    let lam = family.factor_model().factor(0.0);
    let c = family.c();
    let (m_s, m_u) = crate::models::hyperbolic_multipliers(lam, c);
    // Eigenvector of [[1 + c, lam], [c, lam]] for multiplier m: (1, (m - (1 + c)) / lam).
    let v_s = (m_s - (1.0 + c)) / lam;
    let v_u = (m_u - (1.0 + c)) / lam;
    // Columns [s | c | u] in coordinates (x, y, p, q): stable and unstable
    // live in the (y, q) plane, the center is spanned by d/dx and d/dp.
    #[rustfmt::skip]
    let reference = RMat::from_row_slice(4, 4, &[
        0.0, 1.0, 0.0, 0.0,
        1.0, 0.0, 0.0, 1.0,
        0.0, 0.0, 1.0, 0.0,
        v_s, 0.0, 0.0, v_u,
    ]);
    let d = family.d();
    let (ds, dc, du) = block_dims(family.n(), d);
    Splitting::new(
        d,
        FourierSeries::constant_real(d, &reference, 0),
        FourierSeries::zeros(d, (dc + du, ds), 0),
        FourierSeries::zeros(d, (ds + du, dc), 0),
        FourierSeries::zeros(d, (ds + dc, du), 0),
    )
}

/// Invariance defect of the splitting under the cocycle: the largest
/// `norm_rho` over the six off-diagonal couplings
/// `Pi^sigma(theta + omega) gamma(theta) Pi^sigma'(theta)`, `sigma != sigma'`.
pub fn invariance_defect(gamma: &Cocycle, e: &Splitting, rho: f64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for b_out in Bundle::ALL {
        let shifted = e.projection(b_out).shift(gamma.omega());
        let lead = shifted.matmul(gamma.gamma())?;
        for b_in in Bundle::ALL {
            if b_in == b_out {
                continue;
            }
            worst = worst.max(lead.matmul(e.projection(b_in))?.norm_rho(rho));
        }
    }
    Ok(worst)
}

/// What [`close_splitting`] did: sweep count, defect before and after, and
/// how far the splitting moved (projection distance to the input).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClosingReport {
    pub sweeps: usize,
    pub initial_defect: f64,
    pub final_defect: f64,
    pub distance: f64,
}

/// A closing sweep that stalls within this factor of its tolerance has hit
/// the rounding floor of the graph transform and counts as converged.
pub const STALL_SLACK: f64 = 10.0;

/// Drive the invariance defect below `tol` by Jacobi sweeps on the graph
/// coefficients, keeping the reference frame of `e0` fixed.
///
/// Each sweep updates every graph from the frame-adapted cocycle
/// `ghat = T(theta + omega)^{-1} gamma(theta) T(theta)` using the previous
/// sweep's graphs on the right-hand side: the stable graph is solved backward
/// (its equation contracts toward the past), the unstable one forward, and
/// the center rows split — stable rows forward, unstable rows backward.  For
/// mild coupling the defect contracts by roughly the ratio of consecutive
/// trichotomy rates (about 0.3-0.45 for the default family), so tolerances
/// near 1e-12 from defects near 1e-3 need 20-30 sweeps.
///
/// Fails with `NoContraction` when a sweep shrinks the defect by less than a
/// factor 0.9 while still more than [`STALL_SLACK`] times `tol` away, and
/// `MaxIterExceeded` when `max_iter` sweeps were not enough.  A plateau
/// *within* that slack of `tol` is the rounding floor of the sweep and is
/// returned as success with the attained defect in the report.
pub fn close_splitting(
    gamma: &Cocycle,
    e0: &Splitting,
    tol: f64,
    max_iter: usize,
) -> Result<(Splitting, ClosingReport)> {
    let (ds, dc, du) = e0.dims();
    let dim = 2 * e0.n();
    let omega = gamma.omega().to_vec();
    let minus_omega: Vec<f64> = omega.iter().map(|w| -w).collect();

    let mut current = e0.clone();
    let initial_defect = invariance_defect(gamma, &current, 0.0)?;
    let mut defect = initial_defect;
    if defect <= tol {
        return Ok((
            current,
            ClosingReport {
                sweeps: 0,
                initial_defect,
                final_defect: defect,
                distance: 0.0,
            },
        ));
    }

    let t_ref = e0.reference().clone();
    let ghat = t_ref
        .shift(&omega)
        .inverse_nodewise()
        .map_err(degenerate)?
        .matmul(gamma.gamma())?
        .matmul(&t_ref)?;

    // Fixed blocks of ghat in (s, c, u) index ranges.
    let rs = 0..ds;
    let rc = ds..ds + dc;
    let ru = ds + dc..dim;
    let g_ss = ghat.block(rs.clone(), rs.clone());
    let g_s_cu = ghat.block(rs.clone(), rc.start..dim);
    let g_cu_s = ghat.block(rc.start..dim, rs.clone());
    let g_cu_cu_inv = ghat
        .block(rc.start..dim, rc.start..dim)
        .inverse_nodewise()
        .map_err(degenerate)?;
    let g_sc_sc = ghat.block(0..ru.start, 0..ru.start);
    let g_sc_u = ghat.block(0..ru.start, ru.clone());
    let g_u_sc = ghat.block(ru.clone(), 0..ru.start);
    let g_uu = ghat.block(ru.clone(), ru.clone());
    let g_uu_inv = g_uu.inverse_nodewise().map_err(degenerate)?;
    let g_cc = ghat.block(rc.clone(), rc.clone());
    let g_c_s = ghat.block(rc.clone(), rs.clone());
    let g_c_u = ghat.block(rc.clone(), ru.clone());
    let g_s_c = ghat.block(rs.clone(), rc.clone());
    let g_s_u = ghat.block(rs.clone(), ru.clone());
    let g_u_c = ghat.block(ru.clone(), rc.clone());
    let g_u_s = ghat.block(ru.clone(), rs.clone());

    for sweep in 1..=max_iter {
        let a_s = current.graph(Bundle::Stable).clone();
        let a_c = current.graph(Bundle::Center).clone();
        let a_u = current.graph(Bundle::Unstable).clone();

        // Stable graph, backward: the new value at theta from the old one at
        // theta + omega.
        let inner = g_ss.add(&g_s_cu.matmul(&a_s)?)?;
        let a_s_new = g_cu_cu_inv.matmul(&a_s.shift(&omega).matmul(&inner)?.sub(&g_cu_s)?)?;

        // Unstable graph, forward: solve at theta + omega, then shift back.
        let denom_inv = g_uu
            .add(&g_u_sc.matmul(&a_u)?)?
            .inverse_nodewise()
            .map_err(degenerate)?;
        let a_u_new = g_sc_u
            .add(&g_sc_sc.matmul(&a_u)?)?
            .matmul(&denom_inv)?
            .shift(&minus_omega);

        // Center graph: s-rows forward, u-rows backward, sharing the common
        // center factor G.
        let a_cs = a_c.block(0..ds, 0..dc);
        let a_cu = a_c.block(ds..ds + du, 0..dc);
        let g_center = g_cc.add(&g_c_s.matmul(&a_cs)?)?.add(&g_c_u.matmul(&a_cu)?)?;
        let g_center_inv = g_center.inverse_nodewise().map_err(degenerate)?;
        let a_cs_new = g_s_c
            .add(&g_ss.matmul(&a_cs)?)?
            .add(&g_s_u.matmul(&a_cu)?)?
            .matmul(&g_center_inv)?
            .shift(&minus_omega);
        let a_cu_new = g_uu_inv.matmul(
            &a_cu
                .shift(&omega)
                .matmul(&g_center)?
                .sub(&g_u_c)?
                .sub(&g_u_s.matmul(&a_cs)?)?,
        )?;
        let a_c_new = FourierSeries::vstack(&[&a_cs_new, &a_cu_new])?;

        current = Splitting::new(e0.d(), t_ref.clone(), a_s_new, a_c_new, a_u_new)?;
        let new_defect = invariance_defect(gamma, &current, 0.0)?;
        if new_defect <= tol {
            let distance = e0.distance_to(&current)?;
            return Ok((
                current,
                ClosingReport {
                    sweeps: sweep,
                    initial_defect,
                    final_defect: new_defect,
                    distance,
                },
            ));
        }
        if new_defect >= 0.9 * defect {
            // The sweep is a contraction in exact arithmetic, so a plateau
            // this close to `tol` is the rounding floor of the graph
            // transform, not a geometry failure; report the attained defect
            // honestly and let the caller judge it.
            if new_defect <= STALL_SLACK * tol {
                let distance = e0.distance_to(&current)?;
                return Ok((
                    current,
                    ClosingReport {
                        sweeps: sweep,
                        initial_defect,
                        final_defect: new_defect,
                        distance,
                    },
                ));
            }
            return Err(Error::NoContraction {
                defect: new_defect,
                iterations: sweep,
            });
        }
        defect = new_defect;
    }
    Err(Error::MaxIterExceeded {
        residual: defect,
        max_iter,
    })
}

/// The four trichotomy rates with a uniform prefactor: restricted transfer
/// products contract on the stable bundle like `lambda_minus^j`, expand on
/// the unstable one like `lambda_plus^j`, and the center is bracketed by
/// `lambda_c_minus..lambda_c_plus` (forward products bound the upper rate,
/// backward products the lower).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateEstimate {
    pub lambda_minus: f64,
    pub lambda_c_minus: f64,
    pub lambda_c_plus: f64,
    pub lambda_plus: f64,
    /// Uniform prefactor: smallest C with all four restricted-product bounds
    /// `|Gamma^j v| <= C rate^j |v|` holding on the sampled range.
    pub c0: f64,
    /// Number of cocycle iterations used.
    pub j_used: usize,
}

impl RateEstimate {
    /// `|lambda_minus * lambda_plus - lambda|`: the conformal pairing ties
    /// the whisker rates to the factor.
    pub fn pairing_defect(&self, lambda: f64) -> f64 {
        (self.lambda_minus * self.lambda_plus - lambda).abs()
    }
}

/// Estimate trichotomy rates from `j_max` iterations of the cocycle
/// restricted to each bundle, least-squares fitting the upper half
/// `j = j_max/2 .. j_max` to discard the transient the prefactor causes.
///
/// The restricted products are accumulated through per-step frame
/// projections: with `Q(theta)` an orthonormal basis of the bundle, the step
/// matrix is `Q(theta + j omega)^H gamma(theta + (j-1) omega) Q(theta + (j-1) omega)`
/// and the product of these small matrices equals the restriction of the
/// full transfer product (the bundles are invariant, so nothing is lost by
/// projecting).  Accumulating full-space products instead would let roundoff
/// leak into the dominant direction and grow like `(lambda_plus /
/// lambda_minus)^j`, burying the contracting norms after a dozen steps; the
/// projection removes that component every step, so any window length works.
/// Center rates come from the largest and smallest singular values of the
/// restricted center product, which bound the forward growth from above and
/// below.
pub fn estimate_rates(gamma: &Cocycle, e: &Splitting, j_max: usize) -> Result<RateEstimate> {
    let lo = (j_max / 2).max(1);
    if j_max < lo + 1 {
        return Err(Error::RateWindowTooShort {
            needed: lo + 1,
            got: j_max,
        });
    }
    let k_need = gamma
        .gamma()
        .k_max()
        .max(e.basis(Bundle::Stable).k_max())
        .max(e.basis(Bundle::Center).k_max())
        .max(e.basis(Bundle::Unstable).k_max());
    let n_g = crate::fourier::fft::grid_for(k_need);

    // Orthonormal node bases of each bundle along the orbit of the rotation.
    let frames = |b: Bundle, j: i64| -> Result<Vec<CMat>> {
        let grid = e.basis(b).shift(&gamma.step(j)).eval_grid(n_g)?;
        Ok(grid.values().iter().map(|v| v.clone().qr().q()).collect())
    };

    let mut q_prev = [
        frames(Bundle::Stable, 0)?,
        frames(Bundle::Center, 0)?,
        frames(Bundle::Unstable, 0)?,
    ];
    let nodes = q_prev[0].len();
    let dims = [e.dims().0, e.dims().1, e.dims().2];
    let mut products: [Vec<CMat>; 3] =
        [0, 1, 2].map(|s| vec![CMat::identity(dims[s], dims[s]); nodes]);

    // Per-iterate statistics: mean of log norm (for the slope fits) and the
    // extreme over nodes (for the prefactor).
    let mut mean_max = [vec![], vec![], vec![]];
    let mut sup_max = [vec![], vec![], vec![]];
    let mut mean_min_c = Vec::with_capacity(j_max);
    let mut inf_min_c = Vec::with_capacity(j_max);

    for j in 1..=j_max {
        let step = gamma
            .gamma()
            .shift(&gamma.step(j as i64 - 1))
            .eval_grid(n_g)?;
        for s in 0..3 {
            let q_next = frames(Bundle::ALL[s], j as i64)?;
            let mut sum = 0.0;
            let mut sup: f64 = 0.0;
            let mut sum_min = 0.0;
            let mut inf = f64::INFINITY;
            for i in 0..nodes {
                let small = q_next[i].adjoint() * step.value(i) * &q_prev[s][i];
                products[s][i] = &small * &products[s][i];
                let sv = products[s][i].clone().svd(false, false).singular_values;
                let hi = sv[0];
                sum += hi.max(f64::MIN_POSITIVE).ln();
                sup = sup.max(hi);
                if s == 1 {
                    let lo_sv = sv[sv.len() - 1];
                    sum_min += lo_sv.max(f64::MIN_POSITIVE).ln();
                    inf = inf.min(lo_sv);
                }
            }
            mean_max[s].push(sum / nodes as f64);
            sup_max[s].push(sup);
            if s == 1 {
                mean_min_c.push(sum_min / nodes as f64);
                inf_min_c.push(inf);
            }
            q_prev[s] = q_next;
        }
    }

    let slope = |logs: &[f64]| -> f64 {
        let xs: Vec<f64> = (lo..=j_max).map(|j| j as f64).collect();
        least_squares_slope(&xs, &logs[lo - 1..])
    };
    let lambda_minus = slope(&mean_max[0]).exp();
    let lambda_c_plus = slope(&mean_max[1]).exp();
    let lambda_plus = slope(&mean_max[2]).exp();
    let lambda_c_minus = slope(&mean_min_c).exp();

    // The uniform prefactor from the extremes over nodes, covering the four
    // one-sided bounds on the whole sampled range.
    let rates = [lambda_minus, lambda_c_plus, lambda_plus];
    let mut c0 = 1.0f64;
    for j in 1..=j_max {
        for s in 0..3 {
            c0 = c0.max(sup_max[s][j - 1] / rates[s].powi(j as i32));
        }
        c0 = c0.max(lambda_c_minus.powi(j as i32) / inf_min_c[j - 1]);
    }

    Ok(RateEstimate {
        lambda_minus,
        lambda_c_minus,
        lambda_c_plus,
        lambda_plus,
        c0,
        j_used: j_max,
    })
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// One candidate reading of the combined-rate inequality, evaluated against
/// the gap `(lambda_minus, lambda_c_minus)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateCandidate {
    pub formula: String,
    pub value: f64,
    pub within_gap: bool,
}

/// Diagnostic report on the standing assumptions: booleans with the measured
/// quantities, never gating.  The combined-rate condition is reported in all
/// plausible readings because the value `lambda * lambda_plus` sits outside
/// the gap for every dissipative parameter set (see `candidates`), so no
/// single reading is privileged.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HypothesesReport {
    /// `lambda_minus < 1 < lambda_plus`.
    pub hyperbolic: bool,
    /// `lambda_minus < lambda_c_minus <= lambda_c_plus < lambda_plus`.
    pub rates_ordered: bool,
    /// `lambda_c_minus <= lambda <= lambda_c_plus`.
    pub factor_in_center_window: bool,
    /// dim E^c = 2d.
    pub center_dim_ok: bool,
    pub rates: RateEstimate,
    pub conformal_factor: f64,
    pub invariance_defect: f64,
    /// Max projection norm (uniform boundedness of the splitting).
    pub projection_norm: f64,
    pub candidates: Vec<RateCandidate>,
}

pub fn check_hypotheses(
    rates: &RateEstimate,
    lambda: f64,
    defect: f64,
    e: &Splitting,
) -> HypothesesReport {
    let r = rates;
    let gap = |v: f64| r.lambda_minus < v && v < r.lambda_c_minus;
    let candidates = vec![
        RateCandidate {
            formula: "lambda * lambda_plus".into(),
            value: lambda * r.lambda_plus,
            within_gap: gap(lambda * r.lambda_plus),
        },
        RateCandidate {
            formula: "lambda / lambda_plus".into(),
            value: lambda / r.lambda_plus,
            within_gap: gap(lambda / r.lambda_plus),
        },
        RateCandidate {
            formula: "lambda_minus * lambda_plus".into(),
            value: r.lambda_minus * r.lambda_plus,
            within_gap: gap(r.lambda_minus * r.lambda_plus),
        },
    ];
    let (_, dc, _) = e.dims();
    HypothesesReport {
        hyperbolic: r.lambda_minus < 1.0 && 1.0 < r.lambda_plus,
        rates_ordered: r.lambda_minus < r.lambda_c_minus
            && r.lambda_c_minus <= r.lambda_c_plus
            && r.lambda_c_plus < r.lambda_plus,
        factor_in_center_window: r.lambda_c_minus <= lambda && lambda <= r.lambda_c_plus,
        center_dim_ok: dc == 2 * e.d(),
        rates: rates.clone(),
        conformal_factor: lambda,
        invariance_defect: defect,
        projection_norm: e
            .projection_norms()
            .into_iter()
            .fold(0.0, f64::max),
        candidates,
    }
}

/// Verify the algebraic cocycle identity `Gamma^{j+m} = Gamma^j o T_{m omega} * Gamma^m`
/// on the grid, returning the worst node deviation over all splits of `total`.
pub fn cocycle_property_defect(gamma: &Cocycle, total: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    let full = gamma.transfer_series(total)?;
    for j in 1..total {
        let m = total - j;
        let left = gamma.transfer_series(j)?.shift(&gamma.step(m as i64));
        let composed = left.matmul(&gamma.transfer_series(m)?)?;
        worst = worst.max(full.sub(&composed)?.sup_node_norm()?);
    }
    Ok(worst)
}
