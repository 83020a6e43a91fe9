use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{Algorithm, RunConfig};
use crate::diagnostics::{BoundInputs, ComplexityConstants, MatrixNormReport, StationarityReport};
use crate::reform::DistributedProblem;
use crate::twolevel::InnerState;

/// Version stamp of every JSON artifact.
pub const FORMAT_VERSION: u32 = 1;

/// JSON schema of `summary.json`.
pub const SUMMARY_SCHEMA: &str = include_str!("../../schema/summary.schema.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
    Stalled,
}

impl Termination {
    pub fn exit_code(self) -> i32 {
        match self {
            Termination::Converged => 0,
            Termination::MaxIterations | Termination::Stalled => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub format_version: u32,
    pub algorithm: Algorithm,
    pub case: PathBuf,
    pub n_buses: usize,
    pub n_regions: usize,
    /// Number of consensus rows `d`.
    pub n_coupling_rows: usize,
    pub termination: Termination,
    pub objective: f64,
    pub centralized_objective: Option<f64>,
    /// `(objective − centralized) / |centralized|`.
    pub gap: Option<f64>,
    /// `‖Ax + Bx̄‖₂`
    pub residual_norm: f64,
    /// `‖Ax + Bx̄‖∞`
    pub residual_inf: f64,
    /// Threshold the residual was tested against.
    pub tolerance: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub stationarity: Option<StationarityReport>,
    pub wall_time_s: f64,
}

impl Summary {
    pub(super) fn new(cfg: &RunConfig, case: &Path, problem: &DistributedProblem) -> Self {
        Summary {
            format_version: FORMAT_VERSION,
            algorithm: cfg.algorithm,
            case: case.to_path_buf(),
            n_buses: problem.network().n_buses(),
            n_regions: problem.n_regions(),
            n_coupling_rows: problem.n_rows(),
            termination: Termination::MaxIterations,
            objective: f64::NAN,
            centralized_objective: None,
            gap: None,
            residual_norm: 0.0,
            residual_inf: 0.0,
            tolerance: 0.0,
            outer_iterations: 0,
            inner_iterations: 0,
            stationarity: None,
            wall_time_s: 0.0,
        }
    }
}

/// Final iterate of a run, enough to rebuild the problem and re-check it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedState {
    pub format_version: u32,
    pub case: PathBuf,
    /// Region of each bus, in bus-index order.
    pub assignment: Vec<usize>,
    pub inner: InnerState,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub format_version: u32,
    /// Residuals with `d3 = Ax + Bx̄ + z`.
    pub relaxed: StationarityReport,
    /// Residuals with `d3 = Ax + Bx̄`.
    pub consensus: StationarityReport,
    pub feasibility_stationarity: f64,
    pub objective: f64,
    pub matrix_norms: MatrixNormReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    pub format_version: u32,
    pub inputs: BoundInputs,
    pub constants: ComplexityConstants,
    pub matrix_norms: MatrixNormReport,
}
