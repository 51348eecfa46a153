//! Built-in identity suite: the closed-form winding integral over a
//! z-sweep, the local model index formula, the Delta lower bound, the
//! discriminant inequality on a seeded corpus, and the curvature
//! relation on rescaled Wulff shapes. The CLI `verify` command prints
//! one row per check; tests reuse the same rows.

use crate::anisotropy::AnisotropyDensity;
use crate::corpus;
use crate::error::Result;
use crate::geom::Vec3;
use crate::grid::{build_grid, hessian_plus_identity, ScalarField};
use crate::io::report::VerifyRow;
use crate::surface;
use crate::umbilic::{self, ModelHessianParams};
use rand::Rng;
use std::f64::consts::PI;

/// Fault injection hooks for harness self-checks: each fault flips one
/// computation so the corresponding row must fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InjectedFault {
    /// Negate the winding integrand; the appendix row must go red.
    AppendixNegate,
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub quick: bool,
    pub seed: u64,
    pub grid_n: usize,
    pub fault: Option<InjectedFault>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { quick: false, seed: corpus::DEFAULT_SEED, grid_n: 32, fault: None }
    }
}

/// Run the suite and return one row per check.
pub fn run_suite(options: &VerifyOptions) -> Result<Vec<VerifyRow>> {
    let mut rows = Vec::new();
    rows.push(appendix_row(options));
    rows.push(model_index_row());
    rows.push(delta_bound_row(options));
    rows.push(discriminant_row(options)?);
    rows.push(curvature_relation_row(options)?);
    rows.push(exact_invariants_row(options)?);
    Ok(rows)
}

fn appendix_row(options: &VerifyOptions) -> VerifyRow {
    let sweep = [1.0, 1.1, 1.5, 2.0, 5.0];
    let mut worst = 0.0f64;
    let mut passed = true;
    for &z in &sweep {
        let value = match umbilic::appendix_integral(z) {
            Ok(v) => v,
            Err(e) => {
                return VerifyRow {
                    name: "appendix winding integral".into(),
                    passed: false,
                    detail: format!("z={z}: {e}"),
                }
            }
        };
        let value = match options.fault {
            Some(InjectedFault::AppendixNegate) => -value,
            None => value,
        };
        let err = (value + PI).abs();
        worst = worst.max(err);
        if err >= 1e-8 {
            passed = false;
        }
    }
    VerifyRow {
        name: "appendix winding integral".into(),
        passed,
        detail: format!("max |I(z) + pi| = {worst:.3e} over z in {sweep:?}"),
    }
}

fn model_index_row() -> VerifyRow {
    let mut passed = true;
    let mut detail = String::new();
    for n in 3..=6u32 {
        for ratio in [1.0, 2.0, 5.0] {
            match umbilic::model_index(n, 1.0, ratio) {
                Ok(j) if j.doubled() == -((n as i32) - 2) => {}
                Ok(j) => {
                    passed = false;
                    detail = format!("N={n}, ratio={ratio}: got {j}, want -(N-2)/2");
                }
                Err(e) => {
                    passed = false;
                    detail = format!("N={n}, ratio={ratio}: {e}");
                }
            }
        }
    }
    if passed {
        detail = "index = -(N-2)/2 for N in 3..=6, ratios {1, 2, 5}".into();
    }
    VerifyRow { name: "model index formula".into(), passed, detail }
}

fn delta_bound_row(options: &VerifyOptions) -> VerifyRow {
    let mut rng = corpus::seeded_rng(options.seed ^ 0xD417A);
    let pairs = if options.quick { 20 } else { 100 };
    let thetas = if options.quick { 1000 } else { 10_000 };
    let mut worst_margin = f64::INFINITY;
    for _ in 0..pairs {
        let l1: f64 = rng.gen_range(0.2..5.0);
        let l2: f64 = rng.gen_range(0.2..5.0);
        let n = rng.gen_range(3..=6u32);
        let bound = 2.0 / (l1 * l2);
        for k in 0..thetas {
            let theta = 2.0 * PI * k as f64 / thetas as f64;
            let delta = umbilic::model_delta(&ModelHessianParams {
                n,
                lambda1: l1,
                lambda2: l2,
                rho: 1.0,
                theta,
            });
            worst_margin = worst_margin.min(delta - bound);
        }
    }
    VerifyRow {
        name: "Delta lower bound".into(),
        passed: worst_margin >= -1e-12,
        detail: format!("min Delta - 2/(L1 L2) = {worst_margin:.3e} over {pairs} pairs"),
    }
}

fn discriminant_row(options: &VerifyOptions) -> Result<VerifyRow> {
    let n = if options.quick { 16 } else { options.grid_n };
    let pairs = if options.quick { 5 } else { 20 };
    let grid = build_grid(n)?;
    let mut rng = corpus::seeded_rng(options.seed);
    let mut min_value = f64::INFINITY;
    for _ in 0..pairs {
        let gamma = corpus::random_convex_density(&mut rng, &grid);
        let q = corpus::random_convex_support(&mut rng, &grid);
        let disc = surface::discriminant_field(&q, &gamma)?;
        min_value = min_value.min(disc.values().iter().cloned().fold(f64::INFINITY, f64::min));
    }
    Ok(VerifyRow {
        name: "discriminant inequality".into(),
        passed: min_value >= -1e-10,
        detail: format!("min (Lambda^2/4 - K_S/K_W) = {min_value:.3e} over {pairs} seeded pairs at n={n}"),
    })
}

fn curvature_relation_row(options: &VerifyOptions) -> Result<VerifyRow> {
    let n = if options.quick { 16 } else { options.grid_n };
    let grid = build_grid(n)?;
    let families = [
        AnisotropyDensity::constant(1.0),
        AnisotropyDensity::ellipsoidal_diag(Vec3::new(1.0, 1.0, 2.0)),
        AnisotropyDensity::harmonic(1.3, &[(2, 0, 0.6)])?,
        AnisotropyDensity::smoothed_p_norm(4.0, 1e-2)?,
    ];
    let mut worst = 0.0f64;
    for gamma in &families {
        let a_gamma = gamma.tensor_field(grid.clone());
        for r in [0.5, 1.0, 2.0] {
            let q = gamma.scaled(r).field(grid.clone());
            let s = surface::from_support(&q, gamma)?;
            for ((k_sigma, lambda), g) in
                s.k_sigma().iter().zip(s.lambda()).zip(a_gamma.tensors())
            {
                let k_w = 1.0 / g.det();
                worst = worst.max((k_sigma - 0.25 * lambda * lambda * k_w).abs());
            }
        }
    }
    Ok(VerifyRow {
        name: "curvature relation on Wulff shapes".into(),
        passed: worst < 1e-8,
        detail: format!("max |K_S - (Lambda^2/4) K_W| = {worst:.3e} at n={n}"),
    })
}

fn exact_invariants_row(options: &VerifyOptions) -> Result<VerifyRow> {
    let n = if options.quick { 12 } else { 16 };
    let grid = build_grid(n)?;
    let mut rng = corpus::seeded_rng(options.seed ^ 0x1A7);
    let gamma = corpus::random_convex_density(&mut rng, &grid);
    let q = corpus::random_convex_support(&mut rng, &grid).without_closure();
    let a = Vec3::new(0.3, -0.1, 0.2);

    // Kernel: A_{a.nu} = 0 to machine precision on the grid path.
    let linear = ScalarField::from_fn(grid.clone(), |d| a.dot(d.as_vec()));
    let kernel_sup = hessian_plus_identity(&linear)
        .tensors()
        .iter()
        .map(|t| t.frobenius_norm())
        .fold(0.0f64, f64::max);

    // Scaling and translation invariance of Lambda.
    let l0 = surface::camc_lambda(&q, &gamma)?;
    let l_scaled = surface::camc_lambda(&q.scale(2.0), &gamma)?;
    let q_moved = q.linear_combination(1.0, &linear, 1.0);
    let l_moved = surface::camc_lambda(&q_moved, &gamma)?;
    let mut worst_scale = 0.0f64;
    let mut worst_move = 0.0f64;
    for ((v0, vs), vm) in l0.values().iter().zip(l_scaled.values()).zip(l_moved.values()) {
        worst_scale = worst_scale.max((vs - v0 / 2.0).abs());
        worst_move = worst_move.max((vm - v0).abs());
    }
    let passed = kernel_sup < 1e-10 && worst_scale < 1e-10 && worst_move < 1e-10;
    Ok(VerifyRow {
        name: "exact algebraic invariants".into(),
        passed,
        detail: format!(
            "|A_(a.nu)| = {kernel_sup:.2e}, |Lambda(2q) - Lambda/2| = {worst_scale:.2e}, |Lambda(q + a.nu) - Lambda| = {worst_move:.2e}"
        ),
    })
}
