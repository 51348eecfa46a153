//! JSON documents for densities and support surfaces, plus the
//! grid-values exchange file.
//!
//! A density document is a [`GammaSpec`] with an optional translation:
//!
//! ```json
//! {"kind": "ellipsoidal", "diag": [1.0, 1.0, 2.0], "offset": [0.1, 0, 0]}
//! ```
//!
//! A surface document describes the support function, either
//! analytically or as raw nodal values:
//!
//! ```json
//! {"kind": "wulff", "scale": 2.0}
//! {"kind": "sphere", "radius": 1.5}
//! {"kind": "ellipsoid", "diag": [1.3, 1.0, 0.7]}
//! {"kind": "harmonic", "base": 1.0, "terms": [{"l": 2, "m": 0, "c": 0.05}]}
//! {"kind": "grid_values", "path": "q.gridvals"}
//! ```
//!
//! The grid-values file is line-oriented ASCII: a header
//! `wulffkit-grid-values v1 n=<n> charts=px,nx,py,ny,pz,nz` followed by
//! 6 n^2 values, one per line, row-major per chart in the fixed chart
//! order.

use crate::analytic::LinearField;
use crate::anisotropy::{AnisotropyDensity, GammaSpec, HarmonicTerm};
use crate::error::{CoreError, Result};
use crate::geom::Vec3;
use crate::grid::{ScalarField, SphericalGrid};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

/// Density document: family spec plus optional translation a . nu.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaDocument {
    #[serde(flatten)]
    pub spec: GammaSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<[f64; 3]>,
}

impl GammaDocument {
    pub fn build(&self) -> Result<AnisotropyDensity> {
        let mut gamma = AnisotropyDensity::from_spec(self.spec.clone())?;
        if let Some(a) = self.offset {
            gamma = gamma.translated(Vec3::new(a[0], a[1], a[2]));
        }
        Ok(gamma)
    }
}

/// Parse a density from inline JSON or a file path.
pub fn parse_gamma(text: &str) -> Result<(GammaDocument, AnisotropyDensity)> {
    let doc: GammaDocument = serde_json::from_str(text)?;
    let gamma = doc.build()?;
    Ok((doc, gamma))
}

pub fn load_gamma(path: &Path) -> Result<(GammaDocument, AnisotropyDensity)> {
    let text = std::fs::read_to_string(path)?;
    parse_gamma(&text)
}

/// Support-surface document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SurfaceSpec {
    /// q = scale * gamma (a rescaled Wulff shape of the active density).
    Wulff { scale: f64 },
    Sphere { radius: f64 },
    /// Support function |A nu| of the ellipsoid A(S^2).
    Ellipsoid {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        matrix: Option<[[f64; 3]; 3]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        diag: Option<[f64; 3]>,
    },
    Harmonic { base: f64, terms: Vec<HarmonicTerm> },
    /// Raw nodal values from a grid-values file.
    GridValues { path: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurfaceDocument {
    #[serde(flatten)]
    pub spec: SurfaceSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<[f64; 3]>,
}

impl SurfaceDocument {
    /// Shorthand accepted on the command line: `wulff:R`.
    pub fn parse_arg(arg: &str) -> Result<SurfaceDocument> {
        if let Some(rest) = arg.strip_prefix("wulff:") {
            let scale: f64 = rest
                .parse()
                .map_err(|_| CoreError::Parse(format!("invalid wulff scale `{rest}`")))?;
            return Ok(SurfaceDocument { spec: SurfaceSpec::Wulff { scale }, offset: None });
        }
        if arg.trim_start().starts_with('{') {
            return Ok(serde_json::from_str(arg)?);
        }
        let text = std::fs::read_to_string(arg)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Materialize the support function on a grid. `gamma` supplies the
    /// density for wulff-relative specs.
    pub fn build(
        &self,
        grid: &Arc<SphericalGrid>,
        gamma: &AnisotropyDensity,
        base_dir: Option<&Path>,
    ) -> Result<ScalarField> {
        let q = match &self.spec {
            SurfaceSpec::Wulff { scale } => {
                if *scale <= 0.0 {
                    return Err(CoreError::Config("wulff scale must be positive".into()));
                }
                gamma.scaled(*scale).field(grid.clone())
            }
            SurfaceSpec::Sphere { radius } => {
                if *radius <= 0.0 {
                    return Err(CoreError::Config("sphere radius must be positive".into()));
                }
                AnisotropyDensity::constant(*radius).field(grid.clone())
            }
            SurfaceSpec::Ellipsoid { matrix, diag } => {
                let spec = GammaSpec::Ellipsoidal { matrix: *matrix, diag: *diag };
                AnisotropyDensity::from_spec(spec)?.field(grid.clone())
            }
            SurfaceSpec::Harmonic { base, terms } => {
                let spec = GammaSpec::Harmonic { base: *base, terms: terms.clone() };
                AnisotropyDensity::from_spec(spec)?.field(grid.clone())
            }
            SurfaceSpec::GridValues { path } => {
                let full = match base_dir {
                    Some(dir) => dir.join(path),
                    None => Path::new(path).to_path_buf(),
                };
                read_grid_values(&full, grid)?
            }
        };
        match self.offset {
            Some(a) => {
                let shift = ScalarField::from_closure(
                    grid.clone(),
                    Arc::new(LinearField(Vec3::new(a[0], a[1], a[2]))),
                );
                Ok(q.linear_combination(1.0, &shift, 1.0))
            }
            None => Ok(q),
        }
    }
}

const GRID_VALUES_CHARTS: &str = "px,nx,py,ny,pz,nz";

/// Write nodal values in the documented layout (header, then row-major
/// values per chart in the fixed chart order).
pub fn write_grid_values(path: &Path, field: &ScalarField) -> Result<()> {
    let grid = field.grid();
    let mut out = String::new();
    out.push_str(&format!(
        "wulffkit-grid-values v1 n={} charts={}\n",
        grid.n(),
        GRID_VALUES_CHARTS
    ));
    for v in field.values() {
        out.push_str(&format!("{v:.17e}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Read nodal values; the header must match the target grid size.
pub fn read_grid_values(path: &Path, grid: &Arc<SphericalGrid>) -> Result<ScalarField> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CoreError::Parse("empty grid-values file".into()))?;
    let mut n_header = None;
    for token in header.split_whitespace() {
        if let Some(v) = token.strip_prefix("n=") {
            n_header = Some(v.parse::<usize>().map_err(|_| {
                CoreError::Parse(format!("bad n in grid-values header: {token}"))
            })?);
        } else if let Some(order) = token.strip_prefix("charts=") {
            if order != GRID_VALUES_CHARTS {
                return Err(CoreError::Parse(format!(
                    "unsupported chart order `{order}` (expected {GRID_VALUES_CHARTS})"
                )));
            }
        }
    }
    let n = n_header.ok_or_else(|| CoreError::Parse("grid-values header lacks n=".into()))?;
    if n != grid.n() {
        return Err(CoreError::Config(format!(
            "grid-values file has n={n} but the run uses n={}",
            grid.n()
        )));
    }
    let mut values = Vec::with_capacity(grid.node_count());
    for line in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        values.push(
            line.parse::<f64>()
                .map_err(|_| CoreError::Parse(format!("bad value line `{line}`")))?,
        );
    }
    if values.len() != grid.node_count() {
        return Err(CoreError::Parse(format!(
            "expected {} values, found {}",
            grid.node_count(),
            values.len()
        )));
    }
    ScalarField::from_values(grid.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    #[test]
    fn gamma_document_round_trip() {
        let text = r#"{"kind": "ellipsoidal", "diag": [1.0, 1.0, 2.0], "offset": [0.1, 0.0, -0.2]}"#;
        let (doc, gamma) = parse_gamma(text).unwrap();
        assert!(doc.offset.is_some());
        let nu = crate::geom::Direction3::new(0.0, 0.0, 1.0);
        // gamma(z) = |A z| + a . z = 2 - 0.2.
        assert!((gamma.value(nu) - 1.8).abs() < 1e-12);
        let back = serde_json::to_string(&doc).unwrap();
        let (_, gamma2) = parse_gamma(&back).unwrap();
        assert_eq!(gamma.value(nu), gamma2.value(nu));
    }

    #[test]
    fn surface_arg_shorthand() {
        let doc = SurfaceDocument::parse_arg("wulff:2.5").unwrap();
        match doc.spec {
            SurfaceSpec::Wulff { scale } => assert_eq!(scale, 2.5),
            _ => panic!("expected wulff spec"),
        }
        assert!(SurfaceDocument::parse_arg("wulff:abc").is_err());
    }

    #[test]
    fn grid_values_round_trip() {
        let grid = build_grid(8).unwrap();
        let field = ScalarField::from_fn(grid.clone(), |d| 1.0 + 0.1 * d.z());
        let dir = std::env::temp_dir().join("wulffkit_grid_values_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("q.gridvals");
        write_grid_values(&path, &field).unwrap();
        let back = read_grid_values(&path, &grid).unwrap();
        assert_eq!(field.values(), back.values());
        // Mismatched grid size is refused.
        let grid16 = build_grid(16).unwrap();
        assert!(read_grid_values(&path, &grid16).is_err());
    }
}
