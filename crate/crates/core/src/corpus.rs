//! Seeded random densities, support functions and perturbations used by
//! the verification suite and tests. Everything derives from an explicit
//! seed so that reruns are reproducible.

use crate::analytic::{AnalyticFn, HarmonicPerturbation};
use crate::anisotropy::{convexity_check, AnisotropyDensity};
use crate::geom::{Direction3, Vec3};
use crate::grid::{ScalarField, SphericalGrid};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// Default seed for all seeded corpora.
pub const DEFAULT_SEED: u64 = 0xC0FFEE;

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_direction(rng: &mut ChaCha8Rng) -> Direction3 {
    loop {
        let v = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return Direction3::from_vec(v);
        }
    }
}

fn random_harmonic_terms(rng: &mut ChaCha8Rng, amplitude: f64) -> Vec<(u32, i32, f64)> {
    let mut terms = Vec::new();
    let count = rng.gen_range(2..=4);
    for _ in 0..count {
        let l = rng.gen_range(2..=3u32);
        let m = rng.gen_range(-(l as i32)..=(l as i32));
        let c = rng.gen_range(-amplitude..amplitude);
        terms.push((l, m, c));
    }
    terms
}

/// A random convex anisotropy density. Families rotate through constant,
/// ellipsoidal, harmonic-perturbed and smoothed p-norm; harmonic
/// amplitudes back off until the convexity condition holds on the grid.
pub fn random_convex_density(rng: &mut ChaCha8Rng, grid: &Arc<SphericalGrid>) -> AnisotropyDensity {
    match rng.gen_range(0..4u32) {
        0 => AnisotropyDensity::constant(rng.gen_range(0.8..1.3)),
        1 => AnisotropyDensity::ellipsoidal_diag(Vec3::new(
            rng.gen_range(0.85..1.3),
            rng.gen_range(0.85..1.3),
            rng.gen_range(0.85..1.3),
        )),
        2 => convex_harmonic(rng, grid, 0.08),
        _ => AnisotropyDensity::smoothed_p_norm(4.0, rng.gen_range(0.02..0.2)).expect("valid p"),
    }
}

/// A random convex support function (as a density-like closure sampled on
/// the grid): base sphere of random radius plus harmonic perturbations,
/// with amplitude backoff to stay convex.
pub fn random_convex_support(rng: &mut ChaCha8Rng, grid: &Arc<SphericalGrid>) -> ScalarField {
    random_support_density(rng, grid).field(grid.clone())
}

/// The generating closure of a random convex support function, reusable
/// across grids (resolution studies sample the same surface twice).
pub fn random_support_density(rng: &mut ChaCha8Rng, grid: &Arc<SphericalGrid>) -> AnisotropyDensity {
    let radius = rng.gen_range(0.8..1.4);
    convex_harmonic_with_base(rng, grid, radius, 0.08 * radius)
}

fn convex_harmonic(rng: &mut ChaCha8Rng, grid: &Arc<SphericalGrid>, amplitude: f64) -> AnisotropyDensity {
    convex_harmonic_with_base(rng, grid, 1.0, amplitude)
}

fn convex_harmonic_with_base(
    rng: &mut ChaCha8Rng,
    grid: &Arc<SphericalGrid>,
    base: f64,
    amplitude: f64,
) -> AnisotropyDensity {
    let terms = random_harmonic_terms(rng, amplitude);
    let mut scale = 1.0;
    loop {
        let scaled: Vec<(u32, i32, f64)> =
            terms.iter().map(|&(l, m, c)| (l, m, c * scale)).collect();
        let gamma = AnisotropyDensity::harmonic(base, &scaled).expect("supported degrees");
        let report = convexity_check(&gamma, grid);
        // Keep a safety margin so nearby perturbed fields stay convex too.
        if report.is_convex && report.min_eigenvalue > 0.2 * base {
            return gamma;
        }
        scale *= 0.5;
        if scale < 1e-6 {
            return AnisotropyDensity::constant(base);
        }
    }
}

/// A random smooth variation (signed; no positivity constraint), for
/// first-variation and linearization checks.
pub fn random_variation(rng: &mut ChaCha8Rng) -> AnalyticFn {
    let terms = random_harmonic_terms(rng, 1.0);
    Arc::new(HarmonicPerturbation::new(rng.gen_range(-0.5..0.5), &terms).expect("supported degrees"))
}
