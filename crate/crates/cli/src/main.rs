//! Command-line surface: Wulff-shape construction, surface analysis,
//! the two CAMC solvers, and the built-in verification suite.
//!
//! Exit codes: 0 success, 1 verification failure, 2 invalid input or
//! precondition, 3 solver non-convergence.

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::time::Instant;
use wulffkit::anisotropy::{convexity_check, wulff_map, AnisotropyDensity};
use wulffkit::error::CoreError;
use wulffkit::geom::{Direction3, Vec3};
use wulffkit::grid::build_grid;
use wulffkit::io::formats::{self, SurfaceDocument};
use wulffkit::io::obj::Mesh;
use wulffkit::io::report::{
    AnalyzeReport, Payload, ReportDocument, SolveReport, UmbilicRecord, VerifyReport, WulffReport,
};
use wulffkit::solver::{constrained_flow, newton_solve, wulff_fit, SolverConfig, SolverMode};
use wulffkit::surface::{self, from_support};
use wulffkit::umbilic::{poincare_hopf_sum, WField};
use wulffkit::verify::{run_suite, InjectedFault, VerifyOptions};

const EXIT_VERIFY_FAILED: i32 = 1;
const EXIT_INVALID: i32 = 2;
const EXIT_NO_CONVERGENCE: i32 = 3;

#[derive(Parser)]
#[command(name = "wulffkit", version, about = "Anisotropic surface energies: Wulff shapes, umbilics, CAMC solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Density spec: path to a JSON file or inline JSON.
    #[arg(long)]
    gamma: String,
    /// Nodes per cube-face edge (>= 8).
    #[arg(long, default_value_t = 32)]
    grid_n: usize,
    /// Output directory for reports and meshes.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Seed for anything randomized (corpora in verify).
    #[arg(long, default_value_t = 0xC0FFEE)]
    seed: u64,
    /// Worker threads (also settable via WULFFKIT_THREADS).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Construct the Wulff shape of a density and export it as OBJ.
    Wulff {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Analyze a support surface: curvature statistics, umbilics,
    /// rotation indices, fit against the Wulff family.
    Analyze {
        #[command(flatten)]
        common: CommonArgs,
        /// Surface spec: JSON path, inline JSON, or `wulff:R`.
        #[arg(long)]
        surface: String,
        /// Relative threshold for umbilic candidate minima.
        #[arg(long, default_value_t = 0.6)]
        umbilic_tol: f64,
        /// Lambda-spread threshold (relative) for the CAMC gate.
        #[arg(long, default_value_t = 1e-6)]
        camc_tol: f64,
    },
    /// Solve the fixed-Lambda equation by damped Newton iteration.
    Solve {
        #[command(flatten)]
        common: CommonArgs,
        /// Prescribed anisotropic mean curvature (must be negative).
        #[arg(long, allow_hyphen_values = true)]
        lambda: f64,
        /// Initial surface spec (JSON path, inline JSON, `wulff:R`, `sphere`).
        #[arg(long, default_value = "wulff:1.0")]
        q0: String,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 40)]
        max_iterations: usize,
    },
    /// Evolve toward the constrained minimizer by volume-constrained flow.
    Flow {
        #[command(flatten)]
        common: CommonArgs,
        /// Target volume; the literal `wulff` uses the Wulff volume.
        #[arg(long)]
        volume: String,
        #[arg(long, default_value = "sphere")]
        q0: String,
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
        #[arg(long, default_value_t = 200000)]
        max_iterations: usize,
    },
    /// Run the built-in identity suite and print one row per check.
    Verify {
        /// Smaller corpora and coarser grids.
        #[arg(long)]
        quick: bool,
        #[arg(long, default_value_t = 32)]
        grid_n: usize,
        #[arg(long, default_value_t = 0xC0FFEE)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Test-harness hook: inject a named fault so the matching row
        /// must fail (`appendix-negate`).
        #[arg(long)]
        inject_fault: Option<String>,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            classify_error(&err)
        }
    };
    std::process::exit(code);
}

fn classify_error(err: &anyhow::Error) -> i32 {
    if let Some(core) = err.downcast_ref::<CoreError>() {
        match core {
            CoreError::NonConvergence(_) => EXIT_NO_CONVERGENCE,
            _ => EXIT_INVALID,
        }
    } else {
        EXIT_INVALID
    }
}

fn setup_threads(threads: Option<usize>) {
    let count = threads.or_else(|| {
        std::env::var("WULFFKIT_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(count) = count {
        let _ = wulffkit::set_thread_count(count);
    }
}

fn load_gamma_arg(arg: &str) -> anyhow::Result<(serde_json::Value, AnisotropyDensity)> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg).with_context(|| format!("reading density spec {arg}"))?
    };
    let (doc, gamma) = formats::parse_gamma(&text)?;
    Ok((serde_json::to_value(&doc)?, gamma))
}

fn write_report(out_dir: &Path, name: &str, report: &ReportDocument) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join(name);
    std::fs::write(&path, report.to_json_pretty())?;
    Ok(path)
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Wulff { common } => cmd_wulff(common),
        Command::Analyze { common, surface, umbilic_tol, camc_tol } => {
            cmd_analyze(common, &surface, umbilic_tol, camc_tol)
        }
        Command::Solve { common, lambda, q0, tol, max_iterations } => {
            cmd_solve(common, lambda, &q0, tol, max_iterations)
        }
        Command::Flow { common, volume, q0, tol, max_iterations } => {
            cmd_flow(common, &volume, &q0, tol, max_iterations)
        }
        Command::Verify { quick, grid_n, seed, out, inject_fault } => {
            cmd_verify(quick, grid_n, seed, &out, inject_fault.as_deref())
        }
    }
}

fn cmd_wulff(common: CommonArgs) -> anyhow::Result<i32> {
    setup_threads(common.threads);
    let start = Instant::now();
    let (gamma_doc, gamma) = load_gamma_arg(&common.gamma)?;
    let grid = build_grid(common.grid_n)?;

    let report_convexity = convexity_check(&gamma, &grid);
    let w = wulff_map(&gamma, &grid)?;
    let k_min = w.gauss_curvature().iter().cloned().fold(f64::INFINITY, f64::min);
    let k_max = w.gauss_curvature().iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let q = gamma.field(grid.clone());
    let energy = surface::energy(&q, &gamma)?;
    let volume = surface::volume(&q)?;

    std::fs::create_dir_all(&common.out)?;
    let mesh = Mesh::from_positions(&grid, |d: Direction3| gamma.closure().gradient(d.as_vec()));
    let obj_path = common.out.join("wulff.obj");
    mesh.write_obj(&obj_path, "wulff_shape")?;

    let report = ReportDocument::new(
        "wulff",
        serde_json::json!({
            "gamma": gamma_doc,
            "grid_n": common.grid_n,
            "seed": common.seed,
        }),
        Payload::Wulff(WulffReport {
            min_a_gamma_eigenvalue: report_convexity.min_eigenvalue,
            gauss_curvature_min: k_min,
            gauss_curvature_max: k_max,
            energy,
            volume,
            obj_path: Some("wulff.obj".into()),
        }),
        start.elapsed().as_secs_f64(),
    );
    let path = write_report(&common.out, "wulff_report.json", &report)?;
    println!("wulff shape -> {} ({} vertices)", obj_path.display(), mesh.vertices.len());
    println!("report -> {}", path.display());
    Ok(0)
}

fn cmd_analyze(
    common: CommonArgs,
    surface_arg: &str,
    umbilic_tol: f64,
    camc_tol: f64,
) -> anyhow::Result<i32> {
    setup_threads(common.threads);
    let start = Instant::now();
    let (gamma_doc, gamma) = load_gamma_arg(&common.gamma)?;
    let grid = build_grid(common.grid_n)?;
    let surface_doc = SurfaceDocument::parse_arg(surface_arg)?;
    let q = surface_doc.build(&grid, &gamma, None)?;

    let s = from_support(&q, &gamma)?;
    let (l_min, l_max, l_mean) = s.lambda_stats();
    let spread = l_max - l_min;
    let is_camc = spread <= camc_tol * l_mean.abs().max(1.0);

    let disc = surface::discriminant_field(&q, &gamma)?;
    let disc_min = disc.values().iter().cloned().fold(f64::INFINITY, f64::min);

    // Umbilic analysis runs on the pointwise w-field, which is defined
    // for every convex surface; for a verified CAMC surface the constant
    // field is used so the local order estimates apply.
    let wf = if is_camc {
        WField::camc(&q, &gamma, l_mean, camc_tol.max(1e-9))?
    } else {
        WField::pointwise(&q, &gamma)?
    };
    let ph = poincare_hopf_sum(&wf, umbilic_tol)?;
    let fit = wulff_fit(&q, &gamma);
    let energy = surface::energy(&q, &gamma)?;
    let volume = surface::volume(&q)?;

    let report = ReportDocument::new(
        "analyze",
        serde_json::json!({
            "gamma": gamma_doc,
            "surface": surface_doc,
            "grid_n": common.grid_n,
            "seed": common.seed,
            "umbilic_tol": umbilic_tol,
            "camc_tol": camc_tol,
        }),
        Payload::Analyze(AnalyzeReport {
            lambda_min: l_min,
            lambda_max: l_max,
            lambda_mean: l_mean,
            lambda_spread: spread,
            is_camc,
            discriminant_min: disc_min,
            totally_umbilic: ph.totally_umbilic,
            umbilics: ph.points.iter().map(UmbilicRecord::from_point).collect(),
            poincare_hopf_sum: ph.sum.map(|h| h.value()),
            wulff_fit: fit,
            energy,
            volume,
        }),
        start.elapsed().as_secs_f64(),
    );
    let path = write_report(&common.out, "analyze_report.json", &report)?;
    if ph.totally_umbilic {
        println!("surface is totally A-umbilic (rescaled Wulff shape)");
    } else {
        println!("{} umbilic point(s) detected", ph.points.len());
    }
    println!("Lambda in [{l_min:.6}, {l_max:.6}], camc = {is_camc}");
    println!("report -> {}", path.display());
    Ok(0)
}

fn build_q0(
    arg: &str,
    grid: &std::sync::Arc<wulffkit::grid::SphericalGrid>,
    gamma: &AnisotropyDensity,
) -> anyhow::Result<wulffkit::grid::ScalarField> {
    if arg == "sphere" {
        return Ok(AnisotropyDensity::constant(1.0).field(grid.clone()));
    }
    let doc = SurfaceDocument::parse_arg(arg)?;
    Ok(doc.build(grid, gamma, None)?)
}

fn cmd_solve(
    common: CommonArgs,
    lambda: f64,
    q0_arg: &str,
    tol: f64,
    max_iterations: usize,
) -> anyhow::Result<i32> {
    setup_threads(common.threads);
    let start = Instant::now();
    let (gamma_doc, gamma) = load_gamma_arg(&common.gamma)?;
    let grid = build_grid(common.grid_n)?;
    let q0 = build_q0(q0_arg, &grid, &gamma)?;

    let mut config = SolverConfig::newton();
    config.residual_tolerance = tol;
    config.max_iterations = max_iterations;
    let result = newton_solve(&gamma, lambda, &q0.without_closure(), &config)?;

    std::fs::create_dir_all(&common.out)?;
    let positions = surface::support_positions(&result.q_final);
    let mesh = mesh_from_grid_positions(&grid, &positions);
    let obj_path = common.out.join("solve.obj");
    mesh.write_obj(&obj_path, "camc_surface")?;

    let report = ReportDocument::new(
        "solve",
        serde_json::json!({
            "gamma": gamma_doc,
            "lambda": lambda,
            "q0": q0_arg,
            "grid_n": common.grid_n,
            "tol": tol,
            "seed": common.seed,
        }),
        Payload::Solve(SolveReport {
            mode: mode_name(SolverMode::NewtonFixedLambda),
            lambda: result.lambda_final,
            iterations: result.iterations,
            converged: result.converged,
            residual_final: result.residual_history.last().copied().unwrap_or(f64::NAN),
            residual_history: result.residual_history.clone(),
            wulff_fit: result.wulff_fit,
            energy: result.energy_final,
            volume: result.volume_final,
            obj_path: Some("solve.obj".into()),
        }),
        start.elapsed().as_secs_f64(),
    );
    let path = write_report(&common.out, "solve_report.json", &report)?;
    println!(
        "converged in {} iterations; fit c = {:.9}, rms = {:.3e}",
        result.iterations, result.wulff_fit.c, result.wulff_fit.rms
    );
    println!("report -> {}", path.display());
    Ok(0)
}

fn cmd_flow(
    common: CommonArgs,
    volume_arg: &str,
    q0_arg: &str,
    tol: f64,
    max_iterations: usize,
) -> anyhow::Result<i32> {
    setup_threads(common.threads);
    let start = Instant::now();
    let (gamma_doc, gamma) = load_gamma_arg(&common.gamma)?;
    let grid = build_grid(common.grid_n)?;
    let q0 = build_q0(q0_arg, &grid, &gamma)?;

    let target_volume = if volume_arg == "wulff" {
        surface::volume(&gamma.field(grid.clone()).without_closure())?
    } else {
        volume_arg
            .parse::<f64>()
            .map_err(|_| CoreError::Config(format!("invalid volume `{volume_arg}`")))?
    };

    let mut config = SolverConfig::flow();
    config.residual_tolerance = tol;
    config.max_iterations = max_iterations;
    let result = constrained_flow(&gamma, target_volume, &q0.without_closure(), &config)?;

    std::fs::create_dir_all(&common.out)?;
    let positions = surface::support_positions(&result.q_final);
    let mesh = mesh_from_grid_positions(&grid, &positions);
    let obj_path = common.out.join("flow.obj");
    mesh.write_obj(&obj_path, "flow_surface")?;

    let report = ReportDocument::new(
        "flow",
        serde_json::json!({
            "gamma": gamma_doc,
            "volume": target_volume,
            "q0": q0_arg,
            "grid_n": common.grid_n,
            "tol": tol,
            "seed": common.seed,
        }),
        Payload::Solve(SolveReport {
            mode: mode_name(SolverMode::FlowFixedVolume),
            lambda: result.lambda_final,
            iterations: result.iterations,
            converged: result.converged,
            residual_final: result.residual_history.last().copied().unwrap_or(f64::NAN),
            residual_history: thin_history(&result.residual_history, 200),
            wulff_fit: result.wulff_fit,
            energy: result.energy_final,
            volume: result.volume_final,
            obj_path: Some("flow.obj".into()),
        }),
        start.elapsed().as_secs_f64(),
    );
    let path = write_report(&common.out, "flow_report.json", &report)?;
    println!(
        "converged in {} steps; Lambda = {:.9}, fit c = {:.9}, rms = {:.3e}",
        result.iterations, result.lambda_final, result.wulff_fit.c, result.wulff_fit.rms
    );
    println!("report -> {}", path.display());
    Ok(0)
}

fn mode_name(mode: SolverMode) -> String {
    match mode {
        SolverMode::NewtonFixedLambda => "newton_fixed_lambda".into(),
        SolverMode::FlowFixedVolume => "flow_fixed_volume".into(),
    }
}

/// Down-sample long iteration histories for the report (even stride plus
/// the final entry).
fn thin_history(history: &[f64], keep: usize) -> Vec<f64> {
    if history.len() <= keep {
        return history.to_vec();
    }
    let stride = history.len() / keep + 1;
    let mut out: Vec<f64> = history.iter().step_by(stride).cloned().collect();
    if let Some(&last) = history.last() {
        out.push(last);
    }
    out
}

/// Mesh a solved surface: interpolate the Cartesian components of the
/// position map over the corner lattice.
fn mesh_from_grid_positions(
    grid: &std::sync::Arc<wulffkit::grid::SphericalGrid>,
    positions: &[Vec3],
) -> Mesh {
    let xs: Vec<f64> = positions.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = positions.iter().map(|p| p.y).collect();
    let zs: Vec<f64> = positions.iter().map(|p| p.z).collect();
    Mesh::from_positions(grid, |d: Direction3| {
        Vec3::new(
            grid.interpolate(&xs, d.as_vec()),
            grid.interpolate(&ys, d.as_vec()),
            grid.interpolate(&zs, d.as_vec()),
        )
    })
}

fn cmd_verify(
    quick: bool,
    grid_n: usize,
    seed: u64,
    out: &Path,
    inject_fault: Option<&str>,
) -> anyhow::Result<i32> {
    let start = Instant::now();
    let fault = match inject_fault {
        None => None,
        Some("appendix-negate") => Some(InjectedFault::AppendixNegate),
        Some(other) => {
            return Err(CoreError::Config(format!("unknown fault `{other}`")).into());
        }
    };
    let options = VerifyOptions { quick, seed, grid_n, fault };
    let rows = run_suite(&options)?;
    let all_passed = rows.iter().all(|r| r.passed);
    for row in &rows {
        println!(
            "[{}] {:<34} {}",
            if row.passed { "pass" } else { "FAIL" },
            row.name,
            row.detail
        );
    }
    let report = ReportDocument::new(
        "verify",
        serde_json::json!({
            "quick": quick,
            "grid_n": grid_n,
            "seed": seed,
            "inject_fault": inject_fault,
        }),
        Payload::Verify(VerifyReport { rows, all_passed }),
        start.elapsed().as_secs_f64(),
    );
    let path = write_report(out, "verify_report.json", &report)?;
    println!("report -> {}", path.display());
    Ok(if all_passed { 0 } else { EXIT_VERIFY_FAILED })
}
