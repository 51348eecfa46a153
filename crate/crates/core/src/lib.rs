//! Numerics for anisotropic surface energies on the sphere.
//!
//! The crate builds Wulff shapes from an anisotropy density, analyzes
//! convex surfaces given by support functions (anisotropic mean
//! curvature, anisotropic umbilic points, rotation indices of
//! eigendirection line fields), solves the constant-anisotropic-mean-
//! curvature equation, and verifies the analytic identities behind the
//! machinery at desk scale.
//!
//! Modules mirror the pipeline: [`grid`] discretizes S^2 with gnomonic
//! cube faces, [`anisotropy`] holds densities and the Wulff map,
//! [`surface`] support surfaces and curvature, [`umbilic`] local analysis
//! of anisotropic umbilics and winding numbers, [`solver`] the Newton and
//! constrained-flow solvers, and [`io`] the file formats and reports.

pub mod analytic;
pub mod anisotropy;
pub mod corpus;
pub mod error;
pub mod geom;
pub mod grid;
pub mod io;
pub mod solver;
pub mod surface;
pub mod umbilic;
pub mod verify;

pub use error::{CoreError, Result};

/// Configure the global worker pool used by per-node parallel maps.
/// Returns false if the pool was already initialized.
pub fn set_thread_count(threads: usize) -> bool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .is_ok()
}

pub use geom::{Direction3, HalfInteger, SymMat2, Vec3};
pub use grid::{build_grid, ScalarField, SphericalGrid, SymTensorField};
