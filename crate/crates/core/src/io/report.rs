//! Report documents emitted by every command. Reports are plain JSON
//! with a fixed field order (struct order), so reruns with identical
//! inputs and seeds are byte-identical except for the timing block.

use crate::geom::HalfInteger;
use crate::solver::WulffFit;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub command: String,
    /// Echo of the parsed inputs (density, surface, grid, seed, ...).
    pub inputs: serde_json::Value,
    pub payload: Payload,
    pub timing: Timing,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timing {
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payload {
    Wulff(WulffReport),
    Analyze(AnalyzeReport),
    Solve(SolveReport),
    Verify(VerifyReport),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WulffReport {
    pub min_a_gamma_eigenvalue: f64,
    pub gauss_curvature_min: f64,
    pub gauss_curvature_max: f64,
    pub energy: f64,
    pub volume: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obj_path: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UmbilicRecord {
    pub direction: [f64; 3],
    pub deficiency_min: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order_n: Option<u32>,
    /// Rotation index as an exact half-integer (value and doubled form).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index_j: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index_j_doubled: Option<i32>,
}

impl UmbilicRecord {
    pub fn from_point(p: &crate::umbilic::UmbilicPoint) -> UmbilicRecord {
        UmbilicRecord {
            direction: [p.direction.x(), p.direction.y(), p.direction.z()],
            deficiency_min: p.deficiency_min,
            order_n: p.order_n,
            index_j: p.index_j.map(HalfInteger::value),
            index_j_doubled: p.index_j.map(HalfInteger::doubled),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lambda_mean: f64,
    pub lambda_spread: f64,
    /// Whether the surface passes the constant-curvature gate.
    pub is_camc: bool,
    pub discriminant_min: f64,
    pub totally_umbilic: bool,
    pub umbilics: Vec<UmbilicRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poincare_hopf_sum: Option<f64>,
    pub wulff_fit: WulffFit,
    pub energy: f64,
    pub volume: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub mode: String,
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
    pub residual_final: f64,
    pub residual_history: Vec<f64>,
    pub wulff_fit: WulffFit,
    pub energy: f64,
    pub volume: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obj_path: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyRow {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub rows: Vec<VerifyRow>,
    pub all_passed: bool,
}

impl ReportDocument {
    pub fn new(command: &str, inputs: serde_json::Value, payload: Payload, seconds: f64) -> Self {
        ReportDocument {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            inputs,
            payload,
            timing: Timing { seconds },
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Serialized form with the timing block normalized away, for
    /// byte-identity comparisons between reruns.
    pub fn to_json_without_timing(&self) -> String {
        let mut clone = self.clone();
        clone.timing = Timing { seconds: 0.0 };
        serde_json::to_string_pretty(&clone).expect("report serializes")
    }
}
