use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// One inner iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub outer: usize,
    pub inner: usize,
    pub iteration: usize,
    /// `‖Ax + Bx̄ + z‖₂`
    pub residual_norm: f64,
    /// `‖Ax + Bx̄‖₂`
    pub consensus_norm: f64,
    /// `‖Ax + Bx̄‖∞`
    pub consensus_inf: f64,
    pub slack_norm: f64,
    /// `‖zᵗ − zᵗ⁻¹‖₂`
    pub slack_step: f64,
    pub objective: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    /// Regions whose subproblem kept its warm start.
    pub kept_previous: usize,
    /// Regions whose subproblem met both tolerances.
    pub stationary: usize,
    /// `max_i |λ_i + β_i z_i + y_i|`, relative to the size of the terms.
    pub dual_identity: f64,
    /// Largest deviation from `ρ_i r_i = β_i' z_i' − β_i z_i` (primes mark the
    /// previous iteration), relative to the size of the terms.
    pub residual_identity: f64,
}

pub const CSV_HEADER: &str = "outer,inner,iteration,residual_norm,consensus_norm,consensus_inf,slack_norm,\
slack_step,objective,rho_min,rho_max,beta_min,beta_max,kept_previous,stationary,dual_identity,residual_identity";

/// One outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub outer: usize,
    pub inner_iterations: usize,
    pub inner_stop: InnerStop,
    pub consensus_norm: f64,
    pub slack_norm: f64,
    pub lambda_inf: f64,
    pub beta_min: f64,
    pub beta_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerStop {
    Residual,
    SlackStalled,
    IterationCap,
    NoCoupling,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
    pub outer: Vec<OuterRecord>,
}

impl Trace {
    /// CSV with [`CSV_HEADER`], floats in shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(64 + 200 * self.rows.len());
        s.push_str(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{},{},{:e},{:e}",
                r.outer,
                r.inner,
                r.iteration,
                r.residual_norm,
                r.consensus_norm,
                r.consensus_inf,
                r.slack_norm,
                r.slack_step,
                r.objective,
                r.rho_min,
                r.rho_max,
                r.beta_min,
                r.beta_max,
                r.kept_previous,
                r.stationary,
                r.dual_identity,
                r.residual_identity
            );
        }
        s
    }

    pub fn max_dual_identity(&self) -> f64 {
        self.rows.iter().fold(0.0, |m, r| m.max(r.dual_identity))
    }

    pub fn max_residual_identity(&self) -> f64 {
        self.rows.iter().fold(0.0, |m, r| m.max(r.residual_identity))
    }
}
