//! Gnomonic (central-projection) cubed-sphere discretization of S^2.
//!
//! Six charts centered on the cube-face axes cover the sphere; each chart
//! projects along rays through the origin onto the tangent plane at its
//! center. In these coordinates the covariant operator D^2 f + f I turns
//! into the plain planar Hessian of the lifted function
//! `(1 + rho^2)^(1/2) * (f o pi^{-1})`, which is why this discretization
//! is used for everything downstream: the operator of interest *is* a
//! finite-difference Hessian here, with no pole singularities.
//!
//! Nodes are cell-centered (n per edge per face), so every node is owned
//! by exactly one chart. Each chart carries a two-layer halo whose values
//! are filled by fourth-order interpolation from the owning charts; the
//! interpolation acts on lifted values, which keeps the kernel property
//! exact: lifts of `a . nu` are affine on every chart, so their halo fill
//! and finite-difference Hessians are exact to rounding.

use crate::analytic::AnalyticFn;
use crate::error::{CoreError, Result};
use crate::geom::{Direction3, SymMat2, Vec3};
use rayon::prelude::*;
use std::sync::Arc;

/// Ghost layers per chart side.
const GHOST: usize = 2;
/// Interpolation stencil width (fourth order).
const STENCIL: usize = 4;

/// One gnomonic chart: an orthonormal frame `{e1, e2, center}` and the
/// half-width of its valid projected region.
#[derive(Debug, Clone)]
pub struct Chart {
    pub center: Vec3,
    pub e1: Vec3,
    pub e2: Vec3,
    pub extent: f64,
}

impl Chart {
    /// The six cube-face charts, in the fixed order +x, -x, +y, -y, +z, -z.
    pub fn cube_face(face: usize) -> Chart {
        let (center, e1, e2) = match face {
            0 => (Vec3::X, Vec3::Y, Vec3::Z),
            1 => (-Vec3::X, Vec3::Z, Vec3::Y),
            2 => (Vec3::Y, Vec3::Z, Vec3::X),
            3 => (-Vec3::Y, Vec3::X, Vec3::Z),
            4 => (Vec3::Z, Vec3::X, Vec3::Y),
            _ => (-Vec3::Z, Vec3::Y, Vec3::X),
        };
        Chart { center, e1, e2, extent: 1.0 }
    }

    /// A probe chart re-centered at an arbitrary direction, used for local
    /// loops around umbilic candidates. Loops of chart radius up to 0.5
    /// are valid here.
    pub fn probe(center: Direction3) -> Chart {
        let (e1, e2) = center.tangent_basis();
        // tangent_basis returns t1 x t2 = center; reorder to keep
        // {e1, e2, center} right-handed with e1 x e2 = center.
        Chart { center: center.as_vec(), e1, e2, extent: 0.5 }
    }

    /// Point on the chart's tangent plane at projected coordinates `y`.
    pub fn tangent_point(&self, y: [f64; 2]) -> Vec3 {
        self.center + self.e1 * y[0] + self.e2 * y[1]
    }

    /// Inverse projection onto the sphere.
    pub fn unproject(&self, y: [f64; 2]) -> Direction3 {
        Direction3::from_vec(self.tangent_point(y))
    }

    /// Projected coordinates of a direction, if it lies in this chart's
    /// open hemisphere.
    pub fn project(&self, v: Vec3) -> Option<[f64; 2]> {
        let c = v.dot(self.center);
        if c <= 0.0 {
            return None;
        }
        Some([v.dot(self.e1) / c, v.dot(self.e2) / c])
    }

    /// Orthonormal tangent frame at projected coordinates `y`, obtained by
    /// Gram-Schmidt from the projections of `{e1, e2}` onto the tangent
    /// plane of the sphere at `unproject(y)`. The first axis is aligned
    /// with the projection of `e1`.
    pub fn tangent_frame(&self, y: [f64; 2]) -> (Vec3, Vec3) {
        let nu = self.unproject(y).as_vec();
        let tau1 = self.e1 - nu * self.e1.dot(nu);
        let t1 = tau1.normalized();
        let tau2 = self.e2 - nu * self.e2.dot(nu);
        let t2 = (tau2 - t1 * tau2.dot(t1)).normalized();
        (t1, t2)
    }

    /// Upper-triangular inverse `U = B^{-1}` of the change of basis from
    /// the orthonormal tangent frame to the projected chart frame; the
    /// congruence `U^T M U` converts a raw lifted Hessian into tensor
    /// components in the orthonormal frame.
    pub fn frame_uinv(&self, y: [f64; 2]) -> (f64, f64, f64) {
        let rho2 = y[0] * y[0] + y[1] * y[1];
        let b11 = ((1.0 + y[1] * y[1]) / (1.0 + rho2)).sqrt();
        let b12 = -y[0] * y[1] / ((1.0 + rho2) * (1.0 + y[1] * y[1])).sqrt();
        let b22 = 1.0 / (1.0 + y[1] * y[1]).sqrt();
        (1.0 / b11, -b12 / (b11 * b22), 1.0 / b22)
    }
}

/// Owning cube face of a direction: the axis of its largest component.
pub fn owner_face(v: Vec3) -> usize {
    let ax = v.x.abs();
    let ay = v.y.abs();
    let az = v.z.abs();
    if ax >= ay && ax >= az {
        if v.x >= 0.0 {
            0
        } else {
            1
        }
    } else if ay >= az {
        if v.y >= 0.0 {
            2
        } else {
            3
        }
    } else if v.z >= 0.0 {
        4
    } else {
        5
    }
}

/// Halo fill rule for one ghost lattice point: the lifted value is a fixed
/// linear combination of owner-chart nodal values.
#[derive(Debug, Clone)]
struct GhostFill {
    ext_index: u32,
    src: [u32; STENCIL * STENCIL],
    w: [f64; STENCIL * STENCIL],
}

/// Cubed-sphere grid with per-node quadrature weights and precomputed
/// halo-exchange stencils.
#[derive(Debug)]
pub struct SphericalGrid {
    n: usize,
    h: f64,
    charts: Vec<Chart>,
    directions: Vec<Direction3>,
    weights: Vec<f64>,
    node_y: Vec<[f64; 2]>,
    lift: Vec<f64>,
    uinv: Vec<(f64, f64, f64)>,
    frames: Vec<(Vec3, Vec3)>,
    ghost_fills: Vec<Vec<GhostFill>>,
}

/// Build a cubed-sphere grid with `n` nodes per chart edge (n >= 8).
pub fn build_grid(n: usize) -> Result<Arc<SphericalGrid>> {
    SphericalGrid::build(n).map(Arc::new)
}

impl SphericalGrid {
    pub fn build(n: usize) -> Result<SphericalGrid> {
        if n < 8 {
            return Err(CoreError::Config(format!(
                "grid needs at least 8 nodes per edge, got {n}"
            )));
        }
        let h = 2.0 / n as f64;
        let charts: Vec<Chart> = (0..6).map(Chart::cube_face).collect();
        let w1d = corrected_midpoint_weights(n);

        let total = 6 * n * n;
        let mut directions = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        let mut node_y = Vec::with_capacity(total);
        let mut lift = Vec::with_capacity(total);
        let mut uinv = Vec::with_capacity(total);
        let mut frames = Vec::with_capacity(total);

        for chart in &charts {
            for j in 0..n {
                for i in 0..n {
                    let y = [-1.0 + (i as f64 + 0.5) * h, -1.0 + (j as f64 + 0.5) * h];
                    let rho2 = y[0] * y[0] + y[1] * y[1];
                    let dir = chart.unproject(y);
                    directions.push(dir);
                    weights.push(w1d[i] * w1d[j] * (1.0 + rho2).powf(-1.5));
                    node_y.push(y);
                    lift.push((1.0 + rho2).sqrt());
                    uinv.push(chart.frame_uinv(y));
                    frames.push(chart.tangent_frame(y));
                }
            }
        }

        // Project onto the exact total measure: the corrected rule leaves a
        // tiny O(h^7) defect in the total solid angle; rescaling removes it
        // without touching the order of any other integral.
        let total: f64 = weights.iter().sum();
        let scale = 4.0 * std::f64::consts::PI / total;
        for w in &mut weights {
            *w *= scale;
        }

        let mut grid = SphericalGrid {
            n,
            h,
            charts,
            directions,
            weights,
            node_y,
            lift,
            uinv,
            frames,
            ghost_fills: Vec::new(),
        };
        grid.ghost_fills = grid.build_ghost_fills();
        Ok(grid)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Lattice spacing in projected chart coordinates.
    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn node_count(&self) -> usize {
        self.directions.len()
    }

    pub fn charts(&self) -> &[Chart] {
        &self.charts
    }

    pub fn directions(&self) -> &[Direction3] {
        &self.directions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn node_index(&self, face: usize, i: usize, j: usize) -> usize {
        (face * self.n + j) * self.n + i
    }

    pub fn node_direction(&self, idx: usize) -> Direction3 {
        self.directions[idx]
    }

    pub fn node_chart_coords(&self, idx: usize) -> [f64; 2] {
        self.node_y[idx]
    }

    pub fn node_face(&self, idx: usize) -> usize {
        idx / (self.n * self.n)
    }

    /// Orthonormal tangent frame in which per-node tensors are expressed.
    pub fn node_frame(&self, idx: usize) -> (Vec3, Vec3) {
        self.frames[idx]
    }

    pub fn lift_factor(&self, idx: usize) -> f64 {
        self.lift[idx]
    }

    fn ext_dim(&self) -> usize {
        self.n + 2 * GHOST
    }

    fn ext_index(&self, i: isize, j: isize) -> usize {
        let ne = self.ext_dim() as isize;
        ((j + GHOST as isize) * ne + (i + GHOST as isize)) as usize
    }

    /// Interpolation stencil (owner nodes and weights) reproducing the
    /// *lifted* value of a grid field at an arbitrary direction, divided
    /// by the lift factor of the owner target point. Fourth order; exact
    /// for fields whose lift is affine.
    fn interp_stencil(&self, v: Vec3) -> ([u32; STENCIL * STENCIL], [f64; STENCIL * STENCIL], f64) {
        let face = owner_face(v);
        let chart = &self.charts[face];
        let y = chart.project(v).expect("owner chart sees its own direction");
        let mut src = [0u32; STENCIL * STENCIL];
        let mut w = [0.0f64; STENCIL * STENCIL];

        let mut base = [0isize; 2];
        let mut lag = [[0.0f64; STENCIL]; 2];
        for d in 0..2 {
            let t = (y[d] + 1.0) / self.h - 0.5;
            let b = (t.floor() as isize - 1).clamp(0, self.n as isize - STENCIL as isize);
            let s = t - b as f64;
            base[d] = b;
            for k in 0..STENCIL {
                let mut l = 1.0;
                for m in 0..STENCIL {
                    if m != k {
                        l *= (s - m as f64) / (k as f64 - m as f64);
                    }
                }
                lag[d][k] = l;
            }
        }

        let target_lift = (1.0 + y[0] * y[0] + y[1] * y[1]).sqrt();
        let mut p = 0;
        for kj in 0..STENCIL {
            let j = (base[1] + kj as isize) as usize;
            for ki in 0..STENCIL {
                let i = (base[0] + ki as isize) as usize;
                let idx = self.node_index(face, i, j);
                src[p] = idx as u32;
                w[p] = lag[0][ki] * lag[1][kj] * self.lift[idx];
                p += 1;
            }
        }
        (src, w, target_lift)
    }

    fn build_ghost_fills(&self) -> Vec<Vec<GhostFill>> {
        (0..6usize)
            .into_par_iter()
            .map(|face| {
                let chart = &self.charts[face];
                let n = self.n as isize;
                let g = GHOST as isize;
                let mut fills = Vec::new();
                for j in -g..n + g {
                    for i in -g..n + g {
                        if i >= 0 && i < n && j >= 0 && j < n {
                            continue;
                        }
                        let y = [
                            -1.0 + (i as f64 + 0.5) * self.h,
                            -1.0 + (j as f64 + 0.5) * self.h,
                        ];
                        let dir = chart.unproject(y).as_vec();
                        let (src, mut w, target_lift) = self.interp_stencil(dir);
                        let ghost_lift = (1.0 + y[0] * y[0] + y[1] * y[1]).sqrt();
                        let scale = ghost_lift / target_lift;
                        for wk in &mut w {
                            *wk *= scale;
                        }
                        fills.push(GhostFill { ext_index: self.ext_index(i, j) as u32, src, w });
                    }
                }
                fills
            })
            .collect()
    }

    /// Lifted samples of a grid field on one chart's extended lattice
    /// (owned nodes plus the ghost halo).
    pub fn lift_to_chart(&self, values: &[f64], face: usize) -> Vec<f64> {
        let ne = self.ext_dim();
        let mut ext = vec![0.0; ne * ne];
        for j in 0..self.n {
            for i in 0..self.n {
                let idx = self.node_index(face, i, j);
                ext[self.ext_index(i as isize, j as isize)] = self.lift[idx] * values[idx];
            }
        }
        for fill in &self.ghost_fills[face] {
            let mut v = 0.0;
            for k in 0..STENCIL * STENCIL {
                v += fill.w[k] * values[fill.src[k] as usize];
            }
            ext[fill.ext_index as usize] = v;
        }
        ext
    }

    /// Interpolate a grid field (given by nodal values) at an arbitrary
    /// direction. Fourth order; exact when the field's lift is affine.
    pub fn interpolate(&self, values: &[f64], v: Vec3) -> f64 {
        let (src, w, target_lift) = self.interp_stencil(v);
        let mut acc = 0.0;
        for k in 0..STENCIL * STENCIL {
            acc += w[k] * values[src[k] as usize];
        }
        acc / target_lift
    }

    /// Deterministic quadrature: sum of nodal values times weights.
    pub fn integrate_values(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }
}

/// One-dimensional midpoint weights on [-1, 1] with Gregory-style
/// boundary corrections. The composite midpoint rule has the
/// Euler-Maclaurin expansion
///
///   int g - h sum g(x_j) = k1 h^2 [g'] + k2 h^4 [g'''] + k3 h^6 [g^(5)] + O(h^8)
///
/// with k1 = 1/24, k2 = -7/5760, k3 = 31/967680 and [.] the boundary
/// difference. The corrections emulate the boundary-derivative terms
/// with nodal values on the outer six nodes per end, giving an O(h^7)
/// rule; six is the deepest correction whose weights stay positive.
/// Tensor products of this rule drive the spherical quadrature through
/// the gnomonic area element.
fn corrected_midpoint_weights(n: usize) -> Vec<f64> {
    let h = 2.0 / n as f64;
    const R: usize = 6;

    // Moment conditions at the left end: sum_k alpha_k (k+1/2)^m = t_m,
    // matching -k1 g'(-1) - k2 h^2 g'''(-1) - ... after the Taylor
    // expansion g(x_k) = sum_m g^(m)(-1) ((k+1/2) h)^m / m!. The right
    // end mirrors to the same constants.
    let k1 = 1.0 / 24.0;
    let k2 = -7.0 / 5760.0;
    let k3 = 31.0 / 967_680.0;
    let t = [0.0, -k1, 0.0, -6.0 * k2, 0.0, -120.0 * k3];

    let mut mat = [[0.0f64; R]; R];
    let mut rhs = [0.0f64; R];
    for m in 0..R {
        for k in 0..R {
            mat[m][k] = (k as f64 + 0.5).powi(m as i32);
        }
        rhs[m] = t[m];
    }

    // Gaussian elimination with partial pivoting on the 7x7 system.
    for col in 0..R {
        let mut piv = col;
        for r in col + 1..R {
            if mat[r][col].abs() > mat[piv][col].abs() {
                piv = r;
            }
        }
        mat.swap(col, piv);
        rhs.swap(col, piv);
        for r in col + 1..R {
            let f = mat[r][col] / mat[col][col];
            for c in col..R {
                mat[r][c] -= f * mat[col][c];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut alpha = [0.0f64; R];
    for r in (0..R).rev() {
        let mut s = rhs[r];
        for c in r + 1..R {
            s -= mat[r][c] * alpha[c];
        }
        alpha[r] = s / mat[r][r];
    }

    let mut w = vec![h; n];
    for k in 0..R.min(n) {
        w[k] += h * alpha[k];
        w[n - 1 - k] += h * alpha[k];
    }
    w
}

/// Per-node scalar samples of a function on the sphere, with an optional
/// analytic closure for exact (machine-precision) derivative paths.
#[derive(Clone)]
pub struct ScalarField {
    grid: Arc<SphericalGrid>,
    values: Vec<f64>,
    closure: Option<AnalyticFn>,
}

impl ScalarField {
    pub fn from_fn(grid: Arc<SphericalGrid>, f: impl Fn(Direction3) -> f64) -> ScalarField {
        let values = grid.directions().iter().map(|&d| f(d)).collect();
        ScalarField { grid, values, closure: None }
    }

    pub fn from_closure(grid: Arc<SphericalGrid>, closure: AnalyticFn) -> ScalarField {
        let values = grid.directions().iter().map(|d| closure.value(d.as_vec())).collect();
        ScalarField { grid, values, closure: Some(closure) }
    }

    pub fn from_values(grid: Arc<SphericalGrid>, values: Vec<f64>) -> Result<ScalarField> {
        if values.len() != grid.node_count() {
            return Err(CoreError::Config(format!(
                "expected {} nodal values, got {}",
                grid.node_count(),
                values.len()
            )));
        }
        Ok(ScalarField { grid, values, closure: None })
    }

    pub fn constant(grid: Arc<SphericalGrid>, c: f64) -> ScalarField {
        let values = vec![c; grid.node_count()];
        ScalarField { grid, values, closure: None }
    }

    pub fn grid(&self) -> &Arc<SphericalGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn closure(&self) -> Option<&AnalyticFn> {
        self.closure.as_ref()
    }

    /// Same nodal values with the analytic closure removed; forces every
    /// downstream operator through the grid (finite-difference) path.
    pub fn without_closure(&self) -> ScalarField {
        ScalarField { grid: self.grid.clone(), values: self.values.clone(), closure: None }
    }

    /// Value at an arbitrary direction: exact when a closure is present,
    /// otherwise fourth-order interpolation.
    pub fn eval(&self, v: Direction3) -> f64 {
        match &self.closure {
            Some(c) => c.value(v.as_vec()),
            None => self.grid.interpolate(&self.values, v.as_vec()),
        }
    }

    /// alpha * self + beta * other, combining closures when both exist.
    pub fn linear_combination(&self, alpha: f64, other: &ScalarField, beta: f64) -> ScalarField {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        let closure = match (&self.closure, &other.closure) {
            (Some(f), Some(g)) => Some(Arc::new(crate::analytic::SumField::linear_combination(
                alpha,
                f.clone(),
                beta,
                g.clone(),
            )) as AnalyticFn),
            _ => None,
        };
        ScalarField { grid: self.grid.clone(), values, closure }
    }

    pub fn scale(&self, alpha: f64) -> ScalarField {
        let values = self.values.iter().map(|v| alpha * v).collect();
        let closure = self.closure.as_ref().map(|f| {
            Arc::new(crate::analytic::SumField::new(vec![(alpha, f.clone())])) as AnalyticFn
        });
        ScalarField { grid: self.grid.clone(), values, closure }
    }
}

/// Per-node symmetric 2x2 tensors, expressed in each node's orthonormal
/// tangent frame (the normalized chart-projected frame of the owning
/// chart). Raw components are chart-dependent; cross-chart comparisons go
/// through eigenvalues and invariants.
#[derive(Clone)]
pub struct SymTensorField {
    grid: Arc<SphericalGrid>,
    tensors: Vec<SymMat2>,
}

impl SymTensorField {
    pub fn new(grid: Arc<SphericalGrid>, tensors: Vec<SymMat2>) -> SymTensorField {
        SymTensorField { grid, tensors }
    }

    pub fn grid(&self) -> &Arc<SphericalGrid> {
        &self.grid
    }

    pub fn tensors(&self) -> &[SymMat2] {
        &self.tensors
    }

    pub fn linear_combination(&self, alpha: f64, other: &SymTensorField, beta: f64) -> SymTensorField {
        let tensors = self
            .tensors
            .iter()
            .zip(&other.tensors)
            .map(|(a, b)| *a * alpha + *b * beta)
            .collect();
        SymTensorField { grid: self.grid.clone(), tensors }
    }

    pub fn min_eigenvalue(&self) -> (f64, usize) {
        let mut best = (f64::INFINITY, 0);
        for (i, t) in self.tensors.iter().enumerate() {
            let e = t.min_eigenvalue();
            if e < best.0 {
                best = (e, i);
            }
        }
        best
    }
}

/// Chart lift of a field: `(1 + rho^2)^(1/2) f o pi^{-1}` sampled on the
/// chart's extended lattice (ghost halo included). With an analytic
/// closure the lift is the closed-form restriction of the homogeneous
/// extension to the chart plane.
pub fn chart_lift(f: &ScalarField, face: usize) -> Vec<f64> {
    let grid = f.grid();
    match f.closure() {
        Some(c) => {
            let chart = &grid.charts()[face];
            let n = grid.n() as isize;
            let g = GHOST as isize;
            let ne = grid.ext_dim();
            let mut ext = vec![0.0; ne * ne];
            for j in -g..n + g {
                for i in -g..n + g {
                    let y = [
                        -1.0 + (i as f64 + 0.5) * grid.spacing(),
                        -1.0 + (j as f64 + 0.5) * grid.spacing(),
                    ];
                    ext[grid.ext_index(i, j)] = c.value(chart.tangent_point(y));
                }
            }
            ext
        }
        None => grid.lift_to_chart(f.values(), face),
    }
}

/// The tensor field A_f = D^2 f + f I. With an analytic closure this is
/// exact (the Euclidean Hessian of the homogeneous extension restricted
/// to the tangent frame); otherwise second-order centered differences of
/// the chart lift, scaled by `(1 + rho^2)^(1/2)` and rotated into the
/// orthonormal frame.
pub fn hessian_plus_identity(f: &ScalarField) -> SymTensorField {
    let grid = f.grid().clone();
    if let Some(c) = f.closure() {
        let tensors: Vec<SymMat2> = grid
            .directions()
            .par_iter()
            .enumerate()
            .map(|(idx, dir)| {
                let h = c.hessian(dir.as_vec());
                let (t1, t2) = grid.node_frame(idx);
                SymMat2::new(h.quad(t1, t1), h.quad(t1, t2), h.quad(t2, t2))
            })
            .collect();
        return SymTensorField::new(grid, tensors);
    }

    let n = grid.n();
    let h = grid.spacing();
    let per_face: Vec<Vec<SymMat2>> = (0..6usize)
        .into_par_iter()
        .map(|face| {
            let ext = grid.lift_to_chart(f.values(), face);
            let ne = grid.ext_dim();
            let at = |i: isize, j: isize| ext[((j + GHOST as isize) * ne as isize + i + GHOST as isize) as usize];
            let mut out = Vec::with_capacity(n * n);
            for j in 0..n as isize {
                for i in 0..n as isize {
                    let f11 = (at(i + 1, j) - 2.0 * at(i, j) + at(i - 1, j)) / (h * h);
                    let f22 = (at(i, j + 1) - 2.0 * at(i, j) + at(i, j - 1)) / (h * h);
                    let f12 = (at(i + 1, j + 1) - at(i + 1, j - 1) - at(i - 1, j + 1)
                        + at(i - 1, j - 1))
                        / (4.0 * h * h);
                    let idx = grid.node_index(face, i as usize, j as usize);
                    let m = SymMat2::new(f11, f12, f22) * grid.lift_factor(idx);
                    let (u11, u12, u22) = grid.uinv[idx];
                    out.push(m.congruence_upper(u11, u12, u22));
                }
            }
            out
        })
        .collect();

    let mut tensors = Vec::with_capacity(grid.node_count());
    for face in per_face {
        tensors.extend(face);
    }
    SymTensorField::new(grid, tensors)
}

/// Quadrature of a scalar field over the sphere (steradian measure).
pub fn integrate(f: &ScalarField) -> f64 {
    f.grid().integrate_values(f.values())
}

/// Adjoint of the grid-path `hessian_plus_identity` map: for per-node
/// symmetric weights W, returns the nodal vector g with
/// `sum_j tr(W_j (A_h f)_j) = sum_k g_k f_k` exactly, for every f.
///
/// This is the transpose of the lift -> finite-difference -> frame chain
/// (ghost interpolation included), and supplies exact discrete gradients
/// of quadratic functionals such as `sum gamma det(A_q) w`.
pub fn hessian_adjoint(grid: &Arc<SphericalGrid>, weights: &[SymMat2]) -> Vec<f64> {
    let n = grid.n();
    let h = grid.spacing();
    let ne = grid.ext_dim();
    let mut grad = vec![0.0; grid.node_count()];
    for face in 0..6 {
        let mut c = vec![0.0f64; ne * ne];
        for j in 0..n as isize {
            for i in 0..n as isize {
                let idx = grid.node_index(face, i as usize, j as usize);
                let w = weights[idx];
                let (u11, u12, u22) = grid.uinv[idx];
                // P = lift * (U W U^T) for upper-triangular U.
                let a = u11 * w.a11 + u12 * w.a12;
                let b = u11 * w.a12 + u12 * w.a22;
                let p11 = (a * u11 + b * u12) * grid.lift[idx];
                let p12 = b * u22 * grid.lift[idx];
                let p22 = u22 * u22 * w.a22 * grid.lift[idx];
                let inv_h2 = 1.0 / (h * h);
                let cross = p12 / (2.0 * h * h);
                let at = |c: &mut Vec<f64>, di: isize, dj: isize, v: f64| {
                    c[((j + dj + GHOST as isize) * ne as isize + i + di + GHOST as isize) as usize] += v;
                };
                at(&mut c, 0, 0, (-2.0 * p11 - 2.0 * p22) * inv_h2);
                at(&mut c, 1, 0, p11 * inv_h2);
                at(&mut c, -1, 0, p11 * inv_h2);
                at(&mut c, 0, 1, p22 * inv_h2);
                at(&mut c, 0, -1, p22 * inv_h2);
                at(&mut c, 1, 1, cross);
                at(&mut c, -1, -1, cross);
                at(&mut c, 1, -1, -cross);
                at(&mut c, -1, 1, -cross);
            }
        }
        // Transpose of the lift assembly: owned entries feed their node,
        // ghost entries scatter through the interpolation weights.
        for j in 0..n as isize {
            for i in 0..n as isize {
                let idx = grid.node_index(face, i as usize, j as usize);
                grad[idx] += c[grid.ext_index(i, j)] * grid.lift[idx];
            }
        }
        for fill in &grid.ghost_fills[face] {
            let cv = c[fill.ext_index as usize];
            if cv != 0.0 {
                for k in 0..STENCIL * STENCIL {
                    grad[fill.src[k] as usize] += cv * fill.w[k];
                }
            }
        }
    }
    grad
}

/// A sampled closed loop in one chart, counterclockwise with respect to
/// the chart orientation. The last sample returns to the first.
pub struct ChartLoop {
    pub chart: Chart,
    pub points: Vec<[f64; 2]>,
}

/// Sample a circle of the given chart radius around `center` on a probe
/// chart. `m` samples span the full turn inclusively (first ~ last).
pub fn sample_loop(center: Direction3, radius: f64, m: usize) -> Result<ChartLoop> {
    let chart = Chart::probe(center);
    if radius <= 0.0 || radius >= chart.extent {
        return Err(CoreError::Range(format!(
            "loop radius {radius} outside the chart's valid region (extent {})",
            chart.extent
        )));
    }
    if m < 3 {
        return Err(CoreError::Config(format!("loop needs at least 3 samples, got {m}")));
    }
    let points = (0..m)
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / (m - 1) as f64;
            [radius * theta.cos(), radius * theta.sin()]
        })
        .collect();
    Ok(ChartLoop { chart, points })
}

/// Evaluate A_f at an arbitrary chart point. Exact via the closure when
/// present; otherwise finite differences of interpolated lifted samples
/// on a local stencil with spacing `fd_h`.
pub fn tensor_at(f: &ScalarField, chart: &Chart, y: [f64; 2], fd_h: f64) -> SymMat2 {
    if let Some(c) = f.closure() {
        let nu = chart.unproject(y).as_vec();
        let hess = c.hessian(nu);
        let (t1, t2) = chart.tangent_frame(y);
        return SymMat2::new(hess.quad(t1, t1), hess.quad(t1, t2), hess.quad(t2, t2));
    }
    let grid = f.grid();
    let lift_at = |p: [f64; 2]| {
        let dir = chart.unproject(p);
        let rho2 = p[0] * p[0] + p[1] * p[1];
        grid.interpolate(f.values(), dir.as_vec()) * (1.0 + rho2).sqrt()
    };
    let d = fd_h;
    let c0 = lift_at(y);
    let f11 = (lift_at([y[0] + d, y[1]]) - 2.0 * c0 + lift_at([y[0] - d, y[1]])) / (d * d);
    let f22 = (lift_at([y[0], y[1] + d]) - 2.0 * c0 + lift_at([y[0], y[1] - d])) / (d * d);
    let f12 = (lift_at([y[0] + d, y[1] + d]) - lift_at([y[0] + d, y[1] - d])
        - lift_at([y[0] - d, y[1] + d])
        + lift_at([y[0] - d, y[1] - d]))
        / (4.0 * d * d);
    let rho2 = y[0] * y[0] + y[1] * y[1];
    let m = SymMat2::new(f11, f12, f22) * (1.0 + rho2).sqrt();
    let (u11, u12, u22) = chart.frame_uinv(y);
    m.congruence_upper(u11, u12, u22)
}
