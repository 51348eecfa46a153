//! Anisotropic umbilic analysis: the field w = gamma + (Lambda/2) q,
//! detection of isolated zeros of A_w, leading-order estimation from the
//! radial decay of ||A_w||, eigendirection line fields and their
//! rotation indices, the local model Hessian with its eigenvalue
//! formulas, and the closed-form winding integral.
//!
//! A point is an anisotropic umbilic exactly when
//! A_w = A_gamma + (Lambda/2) A_q vanishes there: the differentials of
//! the anisotropic Gauss map and the position map are A_gamma and A_q in
//! support coordinates, so second-order contact with a rescaled Wulff
//! shape is the single matrix equation A_w = 0.
//!
//! The usual normalization that translates the origin so the contact
//! point of the comparison shape sits at zero only adds a linear term
//! a . nu to w; since A_(a . nu) vanishes identically, A_w and every
//! quantity probed here are unchanged, and no explicit translation is
//! performed.

use crate::anisotropy::AnisotropyDensity;
use crate::error::{CoreError, Result};
use crate::geom::{Direction3, HalfInteger, SymMat2};
use crate::grid::{
    hessian_plus_identity, sample_loop, tensor_at, Chart, ScalarField, SymTensorField,
};
use std::f64::consts::PI;

/// How Lambda enters the w-field.
#[derive(Debug, Clone)]
pub enum LambdaMode {
    /// A verified constant (CAMC surface); w is the global field whose
    /// tensor A_w vanishes exactly at A-umbilics.
    Constant(f64),
    /// Pointwise Lambda(nu); zeros of A_w are the A-umbilics of a general
    /// convex surface (second-order contact with the rescaled Wulff shape
    /// matching the local curvature).
    Pointwise(Vec<f64>),
}

/// w = gamma + (Lambda/2) q with its tensor A_w and deficiency ||A_w||.
pub struct WField {
    q: ScalarField,
    gamma: AnisotropyDensity,
    lambda: LambdaMode,
    w: ScalarField,
    a_w: SymTensorField,
    deficiency: ScalarField,
}

impl WField {
    /// Build the w-field of a CAMC surface. The given Lambda is checked
    /// against the computed curvature field: if that field is not
    /// constant within `constancy_tol` (relative to its mean magnitude),
    /// the surface is not CAMC and the construction fails.
    pub fn camc(
        q: &ScalarField,
        gamma: &AnisotropyDensity,
        lambda: f64,
        constancy_tol: f64,
    ) -> Result<WField> {
        let field = crate::surface::camc_lambda(q, gamma)?;
        let mean = field.values().iter().sum::<f64>() / field.values().len() as f64;
        let spread = field
            .values()
            .iter()
            .map(|v| (v - mean).abs())
            .fold(0.0, f64::max);
        if spread > constancy_tol * mean.abs().max(1.0) {
            return Err(CoreError::Domain(format!(
                "not a CAMC surface: Lambda varies by {spread:.3e} around mean {mean:.6}"
            )));
        }
        Ok(Self::with_mode(q, gamma, LambdaMode::Constant(lambda)))
    }

    /// Build the pointwise w-field of a general convex surface.
    pub fn pointwise(q: &ScalarField, gamma: &AnisotropyDensity) -> Result<WField> {
        let lambda = crate::surface::camc_lambda(q, gamma)?;
        Ok(Self::with_mode(q, gamma, LambdaMode::Pointwise(lambda.values().to_vec())))
    }

    fn with_mode(q: &ScalarField, gamma: &AnisotropyDensity, lambda: LambdaMode) -> WField {
        let grid = q.grid().clone();
        let gamma_field = gamma.field(grid.clone());
        let a_q = hessian_plus_identity(q);
        let a_gamma = gamma.tensor_field(grid.clone());

        let (w, a_w) = match &lambda {
            LambdaMode::Constant(l) => {
                let w = gamma_field.linear_combination(1.0, q, l / 2.0);
                let a_w = a_gamma.linear_combination(1.0, &a_q, l / 2.0);
                (w, a_w)
            }
            LambdaMode::Pointwise(ls) => {
                let w_values: Vec<f64> = gamma_field
                    .values()
                    .iter()
                    .zip(q.values())
                    .zip(ls)
                    .map(|((g, qv), l)| g + 0.5 * l * qv)
                    .collect();
                let w = ScalarField::from_values(grid.clone(), w_values).expect("sized");
                let tensors: Vec<SymMat2> = a_gamma
                    .tensors()
                    .iter()
                    .zip(a_q.tensors())
                    .zip(ls)
                    .map(|((g, qq), l)| *g + *qq * (0.5 * l))
                    .collect();
                (w, SymTensorField::new(grid.clone(), tensors))
            }
        };
        let deficiency_values: Vec<f64> =
            a_w.tensors().iter().map(|t| t.frobenius_norm()).collect();
        let deficiency = ScalarField::from_values(grid, deficiency_values).expect("sized");
        WField { q: q.clone(), gamma: gamma.clone(), lambda, w, a_w, deficiency }
    }

    pub fn w(&self) -> &ScalarField {
        &self.w
    }

    pub fn a_w(&self) -> &SymTensorField {
        &self.a_w
    }

    /// Frobenius norm of A_w per node.
    pub fn deficiency(&self) -> &ScalarField {
        &self.deficiency
    }

    pub fn lambda(&self) -> &LambdaMode {
        &self.lambda
    }

    /// A_w at an arbitrary chart point (exact when the underlying fields
    /// carry closures). In pointwise mode Lambda is recomputed locally.
    pub fn tensor_probe_at(&self, chart: &Chart, y: [f64; 2]) -> SymMat2 {
        let h = self.q.grid().spacing();
        let gamma_field = self.gamma.field(self.q.grid().clone());
        let a_g = tensor_at(&gamma_field, chart, y, h);
        let a_q = tensor_at(&self.q, chart, y, h);
        let l = match &self.lambda {
            LambdaMode::Constant(l) => *l,
            LambdaMode::Pointwise(_) => -a_g.trace_product(a_q.inverse()),
        };
        a_g + a_q * (0.5 * l)
    }
}

/// Anything that can report the 2x2 symmetric local tensor around a
/// candidate point: real w-fields, or manufactured model fields.
pub trait TensorProbe {
    fn tensor(&self, chart: &Chart, y: [f64; 2]) -> SymMat2;
    /// Lattice spacing used to pick probe radii.
    fn spacing_hint(&self) -> f64;
}

impl TensorProbe for WField {
    fn tensor(&self, chart: &Chart, y: [f64; 2]) -> SymMat2 {
        self.tensor_probe_at(chart, y)
    }

    fn spacing_hint(&self) -> f64 {
        self.q.grid().spacing()
    }
}

/// Parameters of the local model Hessian at an A-umbilic: leading order
/// N >= 3, the eigenvalue square roots of the coordinate change, and the
/// polar coordinates of the evaluation point.
#[derive(Debug, Clone, Copy)]
pub struct ModelHessianParams {
    pub n: u32,
    pub lambda1: f64,
    pub lambda2: f64,
    pub rho: f64,
    pub theta: f64,
}

impl ModelHessianParams {
    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(CoreError::Config(format!(
                "model order must satisfy N >= 3, got {}",
                self.n
            )));
        }
        if self.lambda1 <= 0.0 || self.lambda2 <= 0.0 {
            return Err(CoreError::Config("model eigenvalue roots must be positive".into()));
        }
        Ok(())
    }
}

/// The model Hessian
/// N(N-1) rho^(N-2) [[cos((N-2)t)/L1^2, -sin((N-2)t)/(L1 L2)],
///                   [-sin((N-2)t)/(L1 L2), -cos((N-2)t)/L2^2]].
pub fn model_hessian(p: &ModelHessianParams) -> SymMat2 {
    let m = (p.n - 2) as f64;
    let amp = (p.n * (p.n - 1)) as f64 * p.rho.powf(m);
    let (s, c) = (m * p.theta).sin_cos();
    SymMat2::new(
        amp * c / (p.lambda1 * p.lambda1),
        -amp * s / (p.lambda1 * p.lambda2),
        -amp * c / (p.lambda2 * p.lambda2),
    )
}

/// Delta(theta) = sqrt(cos^2((N-2)t) (1/L2^2 - 1/L1^2)^2 + 4/(L1 L2)^2),
/// bounded below by 2/(L1 L2).
pub fn model_delta(p: &ModelHessianParams) -> f64 {
    let m = (p.n - 2) as f64;
    let c = (m * p.theta).cos();
    let inv1 = 1.0 / (p.lambda1 * p.lambda1);
    let inv2 = 1.0 / (p.lambda2 * p.lambda2);
    (c * c * (inv2 - inv1) * (inv2 - inv1) + 4.0 * inv1 * inv2).sqrt()
}

/// Eigenvalues of the model Hessian:
/// (N(N-1)/2) rho^(N-2) [cos((N-2)t)(1/L1^2 - 1/L2^2) +- Delta].
pub fn model_eigenvalues(p: &ModelHessianParams) -> (f64, f64, f64) {
    let m = (p.n - 2) as f64;
    let half_amp = 0.5 * (p.n * (p.n - 1)) as f64 * p.rho.powf(m);
    let c = (m * p.theta).cos();
    let inv1 = 1.0 / (p.lambda1 * p.lambda1);
    let inv2 = 1.0 / (p.lambda2 * p.lambda2);
    let delta = model_delta(p);
    (half_amp * (c * (inv1 - inv2) + delta), half_amp * (c * (inv1 - inv2) - delta), delta)
}

/// Rotation index of the major eigendirection of the model Hessian
/// around the origin, computed by numerically unwinding the angle along
/// a unit loop. Exact after half-integer rounding; equals -(N-2)/2.
pub fn model_index(n: u32, lambda1: f64, lambda2: f64) -> Result<HalfInteger> {
    let params = ModelHessianParams { n, lambda1, lambda2, rho: 1.0, theta: 0.0 };
    params.validate()?;
    let samples = 4096;
    let angles: Vec<f64> = (0..=samples)
        .map(|k| {
            let theta = 2.0 * PI * k as f64 / samples as f64;
            model_hessian(&ModelHessianParams { theta, ..params }).major_eigenangle()
        })
        .collect();
    let (index, distance) = rotation_index(&angles)?;
    if distance >= 0.05 {
        return Err(CoreError::Probe(format!(
            "model index did not settle on a half-integer (distance {distance:.3})"
        )));
    }
    Ok(index)
}

/// Rotation index of a line field from its angles (mod pi) along a
/// closed loop whose last sample returns to the first. Angle jumps are
/// wrapped into (-pi/2, pi/2]; a jump above pi/4 means the loop is
/// undersampled. Returns the rounded half-integer and the pre-rounding
/// distance to it.
pub fn rotation_index(angles: &[f64]) -> Result<(HalfInteger, f64)> {
    if angles.len() < 64 {
        return Err(CoreError::Undersampled(format!(
            "need at least 64 loop samples, got {}",
            angles.len()
        )));
    }
    let mut total = 0.0;
    for k in 1..angles.len() {
        let mut d = angles[k] - angles[k - 1];
        while d > PI / 2.0 {
            d -= PI;
        }
        while d <= -PI / 2.0 {
            d += PI;
        }
        if d.abs() > PI / 4.0 {
            return Err(CoreError::Undersampled(format!(
                "angle jump {:.3} rad between samples {} and {} exceeds pi/4",
                d,
                k - 1,
                k
            )));
        }
        total += d;
    }
    let raw = total / (2.0 * PI);
    let (half, distance) = HalfInteger::round_from(raw);
    Ok((half, distance))
}

/// Sampled eigendirection angles (mod pi, major eigenvalue) of a tensor
/// probe along a loop around `p`. Errors out if the tensor vanishes or
/// its eigenvalues cross on the loop; retrying with a different radius
/// is the caller's move.
pub fn eigendirection_loop(
    probe: &impl TensorProbe,
    p: Direction3,
    radius: f64,
    m: usize,
) -> Result<Vec<f64>> {
    let lp = sample_loop(p, radius, m)?;
    let mut angles = Vec::with_capacity(lp.points.len());
    let mut scale = 0.0f64;
    let mut min_gap = f64::INFINITY;
    let mut tensors = Vec::with_capacity(lp.points.len());
    for &y in &lp.points {
        let t = probe.tensor(&lp.chart, y);
        scale = scale.max(t.frobenius_norm());
        tensors.push(t);
    }
    for t in &tensors {
        let norm = t.frobenius_norm();
        if scale == 0.0 || norm < 1e-12 * scale {
            return Err(CoreError::Probe(format!(
                "tensor field vanishes on the probe loop (radius {radius})"
            )));
        }
        let (l1, l2) = t.eigenvalues();
        min_gap = min_gap.min((l1 - l2).abs() / norm);
        angles.push(t.major_eigenangle());
    }
    if min_gap < 1e-9 {
        return Err(CoreError::Probe(format!(
            "eigenvalue crossing on the probe loop (radius {radius}); retry another radius"
        )));
    }
    Ok(angles)
}

/// Outcome of a leading-order fit.
#[derive(Debug, Clone, Copy)]
pub struct OrderEstimate {
    /// Least-squares slope of log ||A_w|| against log rho.
    pub slope: f64,
    /// round(slope) + 2 when the fit is clean, None when unresolved.
    pub order: Option<u32>,
}

/// Estimate the leading order N of the local expansion at an isolated
/// zero from the radial decay ||A_w|| ~ rho^(N-2): least-squares slope
/// over probe radii in [2h, 10h], with the fit flagged unresolved when
/// the slope is not close to a positive integer.
pub fn estimate_order(probe: &impl TensorProbe, p: Direction3) -> Result<OrderEstimate> {
    let h = probe.spacing_hint();
    let radii: Vec<f64> = (0..8)
        .map(|k| 2.0 * h * (5.0f64).powf(k as f64 / 7.0))
        .collect();
    let mut logs = Vec::with_capacity(radii.len());
    for &r in &radii {
        let lp = sample_loop(p, r, 64)?;
        let mut mean = 0.0;
        for &y in &lp.points[..lp.points.len() - 1] {
            mean += probe.tensor(&lp.chart, y).frobenius_norm();
        }
        mean /= (lp.points.len() - 1) as f64;
        if mean <= 0.0 {
            return Err(CoreError::Probe(format!("deficiency vanishes on radius {r}")));
        }
        logs.push((r.ln(), mean.ln()));
    }
    let n = logs.len() as f64;
    let sx: f64 = logs.iter().map(|(x, _)| x).sum();
    let sy: f64 = logs.iter().map(|(_, y)| y).sum();
    let sxx: f64 = logs.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = logs.iter().map(|(x, y)| x * y).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let rounded = slope.round();
    let order = if (slope - rounded).abs() < 0.2 && rounded >= 1.0 {
        Some(rounded as u32 + 2)
    } else {
        None
    };
    Ok(OrderEstimate { slope, order })
}

/// A detected anisotropic umbilic.
#[derive(Debug, Clone)]
pub struct UmbilicPoint {
    pub direction: Direction3,
    pub deficiency_min: f64,
    pub order_n: Option<u32>,
    pub index_j: Option<HalfInteger>,
}

/// Result of scanning a w-field for zeros of the deficiency.
pub enum UmbilicDetection {
    /// The deficiency vanishes globally: the surface is a rescaled
    /// (translated) Wulff shape and every point is an A-umbilic.
    TotallyUmbilic,
    Points(Vec<UmbilicPoint>),
}

/// Detect isolated A-umbilics as local minima of the deficiency below
/// `tol_rel` times the field's median, refined by quadratic
/// interpolation of the squared deficiency on the 3x3 patch. Each
/// accepted point is probed for its leading order and rotation index.
pub fn detect_umbilics(wf: &WField, tol_rel: f64) -> Result<UmbilicDetection> {
    let grid = wf.q.grid().clone();
    let n = grid.n();
    let h = grid.spacing();
    let dvals = wf.deficiency.values();

    // Scale of the tensors entering A_w, for the totally-umbilic test.
    let mut input_scales: Vec<f64> = {
        let a_gamma = wf.gamma.tensor_field(grid.clone());
        let a_q = hessian_plus_identity(&wf.q);
        a_gamma
            .tensors()
            .iter()
            .zip(a_q.tensors())
            .enumerate()
            .map(|(i, (g, qq))| {
                let l = match &wf.lambda {
                    LambdaMode::Constant(l) => *l,
                    LambdaMode::Pointwise(ls) => ls[i],
                };
                g.frobenius_norm() + 0.5 * l.abs() * qq.frobenius_norm()
            })
            .collect()
    };
    let input_scale = median(&mut input_scales);
    let mut sorted: Vec<f64> = dvals.to_vec();
    let med = median(&mut sorted);
    if med < 1e-9 * input_scale {
        return Ok(UmbilicDetection::TotallyUmbilic);
    }

    let threshold = tol_rel * med;
    let mut candidates: Vec<UmbilicPoint> = Vec::new();
    for face in 0..6 {
        // Deficiency on the extended lattice (ghosts interpolated), so
        // minima at chart seams see their true neighbors.
        let ext = grid.lift_to_chart(dvals, face);
        let ne = n + 4;
        let d_at = |i: isize, j: isize| -> f64 {
            let y1 = -1.0 + (i as f64 + 0.5) * h;
            let y2 = -1.0 + (j as f64 + 0.5) * h;
            let lift = (1.0 + y1 * y1 + y2 * y2).sqrt();
            ext[((j + 2) * ne as isize + i + 2) as usize] / lift
        };
        for j in 0..n as isize {
            for i in 0..n as isize {
                let d0 = d_at(i, j);
                if d0 >= threshold {
                    continue;
                }
                let mut is_min = true;
                for dj in -1..=1 {
                    for di in -1..=1 {
                        if di == 0 && dj == 0 {
                            continue;
                        }
                        if d_at(i + di, j + dj) < d0 {
                            is_min = false;
                        }
                    }
                }
                if !is_min {
                    continue;
                }

                // Quadratic refinement on the squared deficiency (smooth
                // where the deficiency itself is conical).
                let sq = |a: f64| a * a;
                let fxx = sq(d_at(i + 1, j)) - 2.0 * sq(d0) + sq(d_at(i - 1, j));
                let fyy = sq(d_at(i, j + 1)) - 2.0 * sq(d0) + sq(d_at(i, j - 1));
                let fxy = 0.25
                    * (sq(d_at(i + 1, j + 1)) - sq(d_at(i + 1, j - 1)) - sq(d_at(i - 1, j + 1))
                        + sq(d_at(i - 1, j - 1)));
                let fx = 0.5 * (sq(d_at(i + 1, j)) - sq(d_at(i - 1, j)));
                let fy = 0.5 * (sq(d_at(i, j + 1)) - sq(d_at(i, j - 1)));
                let det = fxx * fyy - fxy * fxy;
                let (mut ox, mut oy) = (0.0, 0.0);
                if det.abs() > 1e-300 {
                    ox = (-fyy * fx + fxy * fy) / det;
                    oy = (fxy * fx - fxx * fy) / det;
                }
                ox = ox.clamp(-1.0, 1.0);
                oy = oy.clamp(-1.0, 1.0);
                let node_idx = grid.node_index(face, i as usize, j as usize);
                let y0 = grid.node_chart_coords(node_idx);
                let refined = [y0[0] + ox * h, y0[1] + oy * h];
                let direction = grid.charts()[face].unproject(refined);

                // Accept when the refined deficiency genuinely collapses
                // relative to the patch; shallow smooth minima stay put.
                let probe_chart = Chart::probe(direction);
                let refined_def = wf.tensor_probe_at(&probe_chart, [0.0, 0.0]).frobenius_norm();
                let patch_scale = d_at(i + 1, j)
                    .max(d_at(i - 1, j))
                    .max(d_at(i, j + 1))
                    .max(d_at(i, j - 1));
                if refined_def > 0.5 * patch_scale {
                    continue;
                }
                candidates.push(UmbilicPoint {
                    direction,
                    deficiency_min: refined_def,
                    order_n: None,
                    index_j: None,
                });
            }
        }
    }

    // Merge duplicates detected from both sides of a seam.
    candidates.sort_by(|a, b| a.deficiency_min.total_cmp(&b.deficiency_min));
    let mut kept: Vec<UmbilicPoint> = Vec::new();
    for c in candidates {
        if kept
            .iter()
            .all(|k| k.direction.geodesic_distance(c.direction) > 1.5 * h)
        {
            kept.push(c);
        }
    }

    // Probe order and index for each point.
    for point in &mut kept {
        if let Ok(est) = estimate_order(wf, point.direction) {
            point.order_n = est.order;
        }
        point.index_j = probe_index(wf, point.direction, h);
    }
    Ok(UmbilicDetection::Points(kept))
}

fn probe_index(probe: &impl TensorProbe, p: Direction3, h: f64) -> Option<HalfInteger> {
    for radius_factor in [4.0, 6.0, 2.5, 8.0] {
        let radius = radius_factor * h;
        match eigendirection_loop(probe, p, radius, 512) {
            Ok(angles) => match rotation_index(&angles) {
                Ok((j, dist)) if dist < 0.05 => return Some(j),
                _ => continue,
            },
            Err(_) => continue,
        }
    }
    None
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    values[values.len() / 2]
}

/// Poincare-Hopf bookkeeping for the major-eigendirection line field of
/// A_w: sum of the rotation indices over the detected singularities.
pub struct PoincareHopf {
    pub points: Vec<UmbilicPoint>,
    pub sum: Option<HalfInteger>,
    pub all_resolved: bool,
    pub totally_umbilic: bool,
}

pub fn poincare_hopf_sum(wf: &WField, tol_rel: f64) -> Result<PoincareHopf> {
    match detect_umbilics(wf, tol_rel)? {
        UmbilicDetection::TotallyUmbilic => Ok(PoincareHopf {
            points: Vec::new(),
            sum: None,
            all_resolved: false,
            totally_umbilic: true,
        }),
        UmbilicDetection::Points(points) => {
            let all_resolved = points.iter().all(|p| p.index_j.is_some());
            let sum = if all_resolved {
                Some(points.iter().filter_map(|p| p.index_j).sum())
            } else {
                None
            };
            Ok(PoincareHopf { points, sum, all_resolved, totally_umbilic: false })
        }
    }
}

/// Closed-form winding integrand -z (z^2 + 1) / ((z^2 - 1)^2 cos^2 psi + 4 z^2).
pub fn appendix_integrand(z: f64, psi: f64) -> Result<f64> {
    if z <= 0.0 {
        return Err(CoreError::Domain(format!("integrand needs z > 0, got {z}")));
    }
    let z2 = z * z;
    let c = psi.cos();
    Ok(-z * (z2 + 1.0) / ((z2 - 1.0) * (z2 - 1.0) * c * c + 4.0 * z2))
}

/// Quadrature of the winding integrand over a full period; equals -pi
/// for every z > 0. The integrand is smooth and 2 pi periodic, so the
/// midpoint rule converges spectrally; the sample count doubles until
/// the value settles.
pub fn appendix_integral(z: f64) -> Result<f64> {
    if z <= 0.0 {
        return Err(CoreError::Domain(format!("integral needs z > 0, got {z}")));
    }
    let mut m = 256usize;
    let mut prev = appendix_midpoint(z, m);
    loop {
        m *= 2;
        let next = appendix_midpoint(z, m);
        if (next - prev).abs() < 1e-12 || m >= 1 << 16 {
            return Ok(next);
        }
        prev = next;
    }
}

fn appendix_midpoint(z: f64, m: usize) -> f64 {
    let step = 2.0 * PI / m as f64;
    let z2 = z * z;
    let mut sum = 0.0;
    for k in 0..m {
        let c = ((k as f64 + 0.5) * step).cos();
        sum += -z * (z2 + 1.0) / ((z2 - 1.0) * (z2 - 1.0) * c * c + 4.0 * z2);
    }
    sum * step
}

/// The local model tensor field used to manufacture umbilics with a
/// prescribed order in tests: A_w(y) = model Hessian at polar(y).
pub struct ModelField {
    pub n: u32,
    pub lambda1: f64,
    pub lambda2: f64,
    pub spacing: f64,
}

impl TensorProbe for ModelField {
    fn tensor(&self, _chart: &Chart, y: [f64; 2]) -> SymMat2 {
        let rho = (y[0] * y[0] + y[1] * y[1]).sqrt();
        let theta = y[1].atan2(y[0]);
        model_hessian(&ModelHessianParams {
            n: self.n,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            rho,
            theta,
        })
    }

    fn spacing_hint(&self) -> f64 {
        self.spacing
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anisotropy::AnisotropyDensity;
    use crate::geom::Vec3;
    use crate::grid::build_grid;

    #[test]
    fn model_hessian_direct_substitution() {
        // N = 3, L1 = L2 = 1, theta = 0, rho = 1: 6 [[1, 0], [0, -1]].
        let p = ModelHessianParams { n: 3, lambda1: 1.0, lambda2: 1.0, rho: 1.0, theta: 0.0 };
        let m = model_hessian(&p);
        assert!((m.a11 - 6.0).abs() < 1e-14);
        assert!(m.a12.abs() < 1e-14);
        assert!((m.a22 + 6.0).abs() < 1e-14);
    }

    #[test]
    fn model_hessian_weighted_trace_vanishes() {
        // L1^2 P11 + L2^2 P22 = 0 identically.
        for (n, l1, l2, rho, theta) in [
            (3u32, 1.0, 2.0, 0.7, 0.3),
            (4, 0.5, 1.5, 1.2, 2.1),
            (6, 2.0, 0.8, 0.4, -1.0),
        ] {
            let p = ModelHessianParams { n, lambda1: l1, lambda2: l2, rho, theta };
            let m = model_hessian(&p);
            assert!((l1 * l1 * m.a11 + l2 * l2 * m.a22).abs() < 1e-12);
        }
    }

    #[test]
    fn model_hessian_pure_offdiagonal_angle() {
        // theta = pi / (2 (N-2)): diagonal vanishes, off-diagonal is
        // -N(N-1) rho^(N-2) / (L1 L2).
        let n = 5u32;
        let p = ModelHessianParams {
            n,
            lambda1: 1.3,
            lambda2: 0.9,
            rho: 1.1,
            theta: PI / (2.0 * (n - 2) as f64),
        };
        let m = model_hessian(&p);
        assert!(m.a11.abs() < 1e-12);
        assert!(m.a22.abs() < 1e-12);
        let expect = -((n * (n - 1)) as f64) * 1.1f64.powi((n - 2) as i32) / (1.3 * 0.9);
        assert!((m.a12 - expect).abs() < 1e-12);
    }

    #[test]
    fn model_eigenvalues_match_direct_solve() {
        // Hand case from direct substitution: N=3, L1=1, L2=2, theta=0,
        // rho=1 -> Delta = 5/4, eigenvalues 6 and -3/2.
        let p = ModelHessianParams { n: 3, lambda1: 1.0, lambda2: 2.0, rho: 1.0, theta: 0.0 };
        let (lp, lm, delta) = model_eigenvalues(&p);
        assert!((delta - 1.25).abs() < 1e-14);
        assert!((lp - 6.0).abs() < 1e-12);
        assert!((lm + 1.5).abs() < 1e-12);
        // Against the generic symmetric eigen-solver.
        for (n, l1, l2, theta) in [(3u32, 1.0, 1.0, 0.4), (4, 1.7, 0.6, 1.9), (6, 0.9, 2.2, -0.8)] {
            let p = ModelHessianParams { n, lambda1: l1, lambda2: l2, rho: 0.85, theta };
            let (lp, lm, _) = model_eigenvalues(&p);
            let (sp, sm) = model_hessian(&p).eigenvalues();
            assert!((lp - sp).abs() < 1e-12, "plus eigenvalue mismatch");
            assert!((lm - sm).abs() < 1e-12, "minus eigenvalue mismatch");
        }
    }

    #[test]
    fn delta_lower_bound_isotropic_case() {
        // L1 = L2 = 1 gives Delta = 2 and eigenvalues +-N(N-1) rho^(N-2).
        let p = ModelHessianParams { n: 4, lambda1: 1.0, lambda2: 1.0, rho: 0.5, theta: 0.77 };
        let (lp, lm, delta) = model_eigenvalues(&p);
        assert!((delta - 2.0).abs() < 1e-14);
        let amp = 12.0 * 0.5f64.powi(2);
        assert!((lp - amp).abs() < 1e-12);
        assert!((lm + amp).abs() < 1e-12);
    }

    #[test]
    fn model_index_formula() {
        for n in 3..=6u32 {
            for ratio in [1.0, 2.0, 5.0] {
                let j = model_index(n, 1.0, ratio).unwrap();
                assert_eq!(
                    j.doubled(),
                    -((n as i32) - 2),
                    "index for N={n}, ratio={ratio} should be -(N-2)/2"
                );
            }
        }
        assert!(model_index(2, 1.0, 1.0).is_err());
    }

    #[test]
    fn rotation_index_of_constant_field_is_zero() {
        let angles = vec![0.3; 128];
        let (j, d) = rotation_index(&angles).unwrap();
        assert_eq!(j, HalfInteger::ZERO);
        assert!(d < 1e-12);
    }

    #[test]
    fn rotation_index_rejects_undersampling() {
        let angles: Vec<f64> = (0..128).map(|k| 0.9 * k as f64).collect();
        assert!(matches!(rotation_index(&angles), Err(CoreError::Undersampled(_))));
        assert!(matches!(rotation_index(&[0.0; 10]), Err(CoreError::Undersampled(_))));
    }

    #[test]
    fn eigendirection_loop_on_model_field() {
        // N = 3 model: angles wind by -pi over one loop (index -1/2).
        let field = ModelField { n: 3, lambda1: 1.0, lambda2: 1.0, spacing: 0.01 };
        let p = Direction3::new(0.0, 0.0, 1.0);
        let angles = eigendirection_loop(&field, p, 0.1, 256).unwrap();
        let (j, dist) = rotation_index(&angles).unwrap();
        assert_eq!(j.doubled(), -1);
        assert!(dist < 1e-6);
    }

    #[test]
    fn eigendirection_loop_rejects_vanishing_field() {
        struct Zero;
        impl TensorProbe for Zero {
            fn tensor(&self, _: &Chart, _: [f64; 2]) -> SymMat2 {
                SymMat2::ZERO
            }
            fn spacing_hint(&self) -> f64 {
                0.01
            }
        }
        let p = Direction3::new(0.0, 0.0, 1.0);
        assert!(matches!(
            eigendirection_loop(&Zero, p, 0.1, 128),
            Err(CoreError::Probe(_))
        ));
    }

    #[test]
    fn order_estimation_on_manufactured_fields() {
        let p = Direction3::new(0.1, -0.2, 0.97);
        for n in [3u32, 5] {
            let field = ModelField { n, lambda1: 1.0, lambda2: 1.6, spacing: 0.01 };
            let est = estimate_order(&field, p).unwrap();
            assert_eq!(est.order, Some(n), "slope was {}", est.slope);
        }
        // Constant tensor field: slope ~ 0, unresolved.
        struct Flat;
        impl TensorProbe for Flat {
            fn tensor(&self, _: &Chart, _: [f64; 2]) -> SymMat2 {
                SymMat2::new(1.0, 0.2, -0.4)
            }
            fn spacing_hint(&self) -> f64 {
                0.01
            }
        }
        let est = estimate_order(&Flat, p).unwrap();
        assert!(est.order.is_none());
        assert!(est.slope.abs() < 0.2);
    }

    #[test]
    fn wulff_shapes_are_totally_umbilic() {
        // Rescaled *and translated*: q = r gamma + a . nu.
        let grid = build_grid(16).unwrap();
        let a = Vec3::new(0.2, -0.1, 0.15);
        for gamma in [
            AnisotropyDensity::constant(1.0),
            AnisotropyDensity::ellipsoidal_diag(Vec3::new(1.0, 1.0, 2.0)),
        ] {
            for r in [0.5, 2.0] {
                let q = gamma.scaled(r).translated(a).field(grid.clone());
                let wf = WField::camc(&q, &gamma, -2.0 / r, 1e-6).unwrap();
                let sup = wf
                    .deficiency()
                    .values()
                    .iter()
                    .cloned()
                    .fold(0.0f64, f64::max);
                assert!(sup < 1e-9, "deficiency {sup:e}");
                assert!(matches!(
                    detect_umbilics(&wf, 0.5).unwrap(),
                    UmbilicDetection::TotallyUmbilic
                ));
            }
        }
    }

    #[test]
    fn mismatched_lambda_gives_uniform_deficiency() {
        // A_w = (dLambda / 2) A_q when Lambda is off by dLambda; with
        // A_q positive definite the deficiency is bounded away from 0.
        let grid = build_grid(12).unwrap();
        let gamma = AnisotropyDensity::constant(1.0);
        let q = gamma.field(grid.clone());
        let wf = WField::camc(&q, &gamma, -2.2, 1e-6).unwrap();
        let min = wf
            .deficiency()
            .values()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        // dLambda = -0.2, A_q = I, so deficiency = 0.1 * sqrt(2).
        assert!((min - 0.1 * 2.0f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn camc_constructor_rejects_non_camc_surfaces() {
        let grid = build_grid(12).unwrap();
        let gamma = AnisotropyDensity::constant(1.0);
        let q = AnisotropyDensity::ellipsoidal_diag(Vec3::new(1.3, 1.0, 0.7)).field(grid.clone());
        assert!(matches!(
            WField::camc(&q, &gamma, -2.0, 1e-6),
            Err(CoreError::Domain(_))
        ));
    }

    #[test]
    fn triaxial_ellipsoid_has_four_umbilics() {
        // Classical oracle: the ellipsoid with semi-axes a > b > c has
        // four umbilics in the x-z plane; at the surface point (x, 0, z)
        // with x = a sqrt((a^2-b^2)/(a^2-c^2)), z = c sqrt((b^2-c^2)/(a^2-c^2))
        // the outward normal is (x/a^2, 0, z/c^2) normalized. Each
        // carries line-field index +1/2, summing to 2.
        let grid = build_grid(32).unwrap();
        let gamma = AnisotropyDensity::constant(1.0);
        let (a, b, c) = (1.3f64, 1.0f64, 0.7f64);
        let q = AnisotropyDensity::ellipsoidal_diag(Vec3::new(a, b, c)).field(grid.clone());
        let wf = WField::pointwise(&q, &gamma).unwrap();
        let det = detect_umbilics(&wf, 0.6).unwrap();
        let points = match det {
            UmbilicDetection::Points(p) => p,
            _ => panic!("expected isolated umbilics"),
        };
        assert_eq!(points.len(), 4, "found {:?}", points.len());

        let x = a * ((a * a - b * b) / (a * a - c * c)).sqrt();
        let z = c * ((b * b - c * c) / (a * a - c * c)).sqrt();
        let expected = Direction3::new(x / (a * a), 0.0, z / (c * c));
        let h = grid.spacing();
        for p in &points {
            let folded =
                Direction3::new(p.direction.x().abs(), p.direction.y().abs(), p.direction.z().abs());
            let expect_folded = Direction3::new(expected.x(), 0.0, expected.z());
            assert!(
                folded.geodesic_distance(expect_folded) < 2.0 * h,
                "umbilic at {:?} not near oracle {:?}",
                p.direction,
                expected
            );
            assert_eq!(p.index_j.map(|j| j.doubled()), Some(1), "classical umbilics carry +1/2");
        }
        let ph = poincare_hopf_sum(&wf, 0.6).unwrap();
        assert_eq!(ph.sum.map(|s| s.doubled()), Some(4), "indices must sum to 2");
    }

    #[test]
    fn integrand_at_z_one_is_constant() {
        for psi in [0.0, 0.3, 1.0, 2.5] {
            assert!((appendix_integrand(1.0, psi).unwrap() + 0.5).abs() < 1e-15);
        }
        assert!(appendix_integrand(-1.0, 0.0).is_err());
    }

    #[test]
    fn winding_integral_is_minus_pi() {
        // Oracle for z != 1: the antiderivative -(1/2) arctan(2 z tan(psi)
        // / (z^2 + 1)) evaluated over the branches (0, pi/2), (pi/2,
        // 3pi/2), (3pi/2, 2pi) gives -pi/4 - pi/2 - pi/4 = -pi.
        for z in [1.0, 1.1, 1.5, 2.0, 5.0] {
            let v = appendix_integral(z).unwrap();
            assert!((v + PI).abs() < 1e-8, "z={z}: {v}");
        }
        // Branch-evaluated antiderivative as an independent check.
        for z in [2.0f64, 5.0] {
            let anti = |psi: f64| -0.5 * (2.0 * z * psi.tan() / (z * z + 1.0)).atan();
            let eps = 1e-9;
            let branches = (anti(PI / 2.0 - eps) - anti(0.0))
                + (anti(3.0 * PI / 2.0 - eps) - anti(PI / 2.0 + eps))
                + (anti(2.0 * PI) - anti(3.0 * PI / 2.0 + eps));
            assert!((branches + PI).abs() < 1e-6);
            assert!((appendix_integral(z).unwrap() - branches).abs() < 1e-6);
        }
    }

    #[test]
    fn rotation_index_invariant_under_radius_change() {
        let field = ModelField { n: 4, lambda1: 0.8, lambda2: 1.9, spacing: 0.01 };
        let p = Direction3::new(0.2, 0.3, 0.93);
        let mut indices = Vec::new();
        for radius in [0.05, 0.12] {
            let angles = eigendirection_loop(&field, p, radius, 512).unwrap();
            let (j, _) = rotation_index(&angles).unwrap();
            indices.push(j);
        }
        assert_eq!(indices[0], indices[1]);
        assert_eq!(indices[0].doubled(), -2);
    }
}
