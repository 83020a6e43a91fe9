//! Two-level ADMM: an inner three-block ADMM on the slack-relaxed consensus
//! problem, wrapped in an outer augmented-Lagrangian loop on `z = 0`.

mod inner;
mod trace;
mod updates;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::RectState;
use crate::nlp::Tolerances;
use crate::reform::DistributedProblem;

pub(crate) use inner::{Engine, SlackMode, StepReport};
pub use inner::InnerState;
pub use trace::{InnerStop, OuterRecord, Trace, TraceRow, CSV_HEADER};
pub use updates::{
    heuristic_step, outer_update_rule1, outer_update_rule2, update_dual_row, update_slack_row, update_xbar_row,
    Heuristic, XbarInput, PENALTY_CAP,
};

pub(crate) use updates::{norm2, norm_inf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    /// Projected multiplier step every outer iteration; penalty raised when
    /// the slack fails to shrink by `θ`.
    Rule1,
    /// Multiplier step when `‖z‖ ≤ η_k`, penalty step otherwise.
    Rule2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoLevelConfig {
    pub rule: Rule,
    pub heuristic: Heuristic,
    pub beta0: f64,
    /// Outer penalty growth factor.
    pub c: f64,
    /// Inner penalty growth factor of the heuristics.
    pub gamma: f64,
    pub theta: f64,
    /// Outer tolerance: stop when `‖Ax + Bx̄‖₂ ≤ √d·ε`.
    pub epsilon: f64,
    /// `η_k = η₀/k`; `None` takes `η₀ = ‖z¹‖`.
    pub eta0: Option<f64>,
    pub lambda_bound: f64,
    pub inner_cap: usize,
    pub outer_cap: usize,
    /// `0` runs the sequential schedule.
    pub threads: usize,
    pub nlp: Tolerances,
}

impl Default for TwoLevelConfig {
    fn default() -> Self {
        TwoLevelConfig {
            rule: Rule::Rule1,
            heuristic: Heuristic::Tl1,
            beta0: 1000.0,
            c: 6.0,
            gamma: 6.0,
            theta: 0.8,
            epsilon: 2e-4,
            eta0: None,
            lambda_bound: 1e12,
            inner_cap: 500,
            outer_cap: 300,
            threads: 0,
            nlp: Tolerances::default(),
        }
    }
}

impl TwoLevelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.beta0 > 0.0) {
            return bad("beta0 must be positive");
        }
        if !(self.c > 1.0) || !(self.gamma > 1.0) {
            return bad("c and gamma must exceed 1");
        }
        if !(0.0..1.0).contains(&self.theta) {
            return bad("theta must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if self.eta0.is_some_and(|e| !(e >= 0.0)) {
            return bad("eta0 must be nonnegative");
        }
        if !(self.lambda_bound > 0.0) {
            return bad("lambda_bound must be positive");
        }
        if self.inner_cap == 0 || self.outer_cap == 0 {
            return bad("iteration caps must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxOuter,
    /// Every outer penalty sits at its cap and the consensus residual
    /// stopped decreasing.
    Stalled,
}

/// Outer-level multipliers and penalties.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterState {
    pub lambda: Vec<f64>,
    pub beta: Vec<f64>,
    pub k: usize,
}

#[derive(Debug, Clone)]
pub struct TwoLevelResult {
    pub state: RectState,
    pub inner: InnerState,
    pub outer: OuterState,
    pub objective: f64,
    pub status: Status,
    pub trace: Trace,
    /// `‖Ax + Bx̄‖₂` and `‖Ax + Bx̄‖∞` at the returned point.
    pub consensus_norm: f64,
    pub consensus_inf: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
}

/// Inner stopping threshold `√d / (2500 k)`.
pub fn inner_tolerance(d: usize, k: usize) -> f64 {
    (d as f64).sqrt() / (2500.0 * k as f64)
}

/// Runs the inner ADMM from the engine's current `(x, x̄)` with the outer
/// pair `(λ, β)`, appending one trace row per iteration.
#[allow(clippy::too_many_arguments)]
pub(crate) fn inner_admm(
    engine: &mut Engine,
    outer: &OuterState,
    beta: &mut Vec<f64>,
    cfg: &TwoLevelConfig,
    trace: &mut Trace,
) -> Result<InnerStop> {
    let d = outer.lambda.len();
    let mut rho: Vec<f64> = beta.iter().map(|b| (2.0 * b).min(PENALTY_CAP)).collect();
    engine.restart(&outer.lambda, beta, &rho);
    if d == 0 {
        let report = engine.step()?;
        trace.rows.push(row(outer.k, 1, trace.rows.len() + 1, &report, &rho, beta));
        return Ok(InnerStop::NoCoupling);
    }
    let tol = inner_tolerance(d, outer.k);
    let mut residual_prev = engine.residual();
    for t in 1..=cfg.inner_cap {
        let report = engine.step()?;
        trace.rows.push(row(outer.k, t, trace.rows.len() + 1, &report, &rho, beta));
        if norm2(&report.residual) <= tol {
            return Ok(InnerStop::Residual);
        }
        if report.slack_change() <= 1e-8 {
            return Ok(InnerStop::SlackStalled);
        }
        if t > 1 || cfg.heuristic != Heuristic::Tl3 {
            heuristic_step(
                cfg.heuristic,
                cfg.gamma,
                cfg.theta,
                &report.residual,
                &residual_prev,
                &report.z,
                &report.z_prev,
                &mut rho,
                beta,
            );
            engine.set_penalties(beta, &rho);
        }
        residual_prev = report.residual;
    }
    Ok(InnerStop::IterationCap)
}

fn row(outer: usize, inner: usize, iteration: usize, r: &StepReport, rho: &[f64], beta: &[f64]) -> TraceRow {
    let (rho_min, rho_max) = min_max(rho);
    let (beta_min, beta_max) = min_max(beta);
    TraceRow {
        outer,
        inner,
        iteration,
        residual_norm: norm2(&r.residual),
        consensus_norm: norm2(&r.consensus),
        consensus_inf: norm_inf(&r.consensus),
        slack_norm: norm2(&r.z),
        slack_step: r.slack_change(),
        objective: r.objective,
        rho_min,
        rho_max,
        beta_min,
        beta_max,
        kept_previous: r.kept_previous,
        stationary: r.stationary,
        dual_identity: r.dual_identity,
        residual_identity: r.residual_identity,
    }
}

pub(crate) fn min_max(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(*x), hi.max(*x)))
}

/// Two-level ADMM from the flat start.
pub fn two_level_solve(problem: &DistributedProblem, cfg: &TwoLevelConfig) -> Result<TwoLevelResult> {
    let x0 = problem.flat_start();
    let xbar0 = problem.xbar_from_blocks(&x0);
    two_level_solve_from(problem, cfg, x0, xbar0)
}

/// Two-level ADMM from a given `(x⁰, x̄⁰)`.
pub fn two_level_solve_from(
    problem: &DistributedProblem,
    cfg: &TwoLevelConfig,
    x0: Vec<Vec<f64>>,
    xbar0: Vec<f64>,
) -> Result<TwoLevelResult> {
    cfg.validate()?;
    let d = problem.n_rows();
    let mut engine = Engine::new(problem, x0, xbar0, cfg.nlp, cfg.threads, SlackMode::Free)?;
    let mut outer = OuterState {
        lambda: vec![0.0; d],
        beta: vec![cfg.beta0; d],
        k: 1,
    };
    let mut trace = Trace::default();
    let mut z_prev: Option<Vec<f64>> = None;
    let mut eta0 = cfg.eta0;
    let target = (d as f64).sqrt() * cfg.epsilon;
    let mut consensus_prev = f64::INFINITY;
    let status = loop {
        let mut beta = outer.beta.clone();
        let before = trace.rows.len();
        let stop = inner_admm(&mut engine, &outer, &mut beta, cfg, &mut trace)?;
        let inner_state = engine.state();
        let consensus = problem.coupling().consensus_residual(&inner_state.x, &inner_state.xbar);
        let z = inner_state.z.clone();
        let (beta_min, beta_max) = min_max(&beta);
        trace.outer.push(OuterRecord {
            outer: outer.k,
            inner_iterations: trace.rows.len() - before,
            inner_stop: stop,
            consensus_norm: norm2(&consensus),
            slack_norm: norm2(&z),
            lambda_inf: norm_inf(&outer.lambda),
            beta_min,
            beta_max,
        });
        log::info!(
            "outer {}: {} inner iterations ({:?}), consensus {:.3e}, slack {:.3e}",
            outer.k,
            trace.rows.len() - before,
            stop,
            norm2(&consensus),
            norm2(&z)
        );
        let consensus_norm = norm2(&consensus);
        if consensus_norm <= target {
            break Status::Converged;
        }
        if outer.k >= cfg.outer_cap {
            break Status::MaxOuter;
        }
        // at the cap the outer loop is a pure penalty method; give up once
        // that stops making progress
        if beta.iter().all(|b| *b >= PENALTY_CAP) && consensus_norm >= consensus_prev {
            break Status::Stalled;
        }
        consensus_prev = consensus_norm;
        // the heuristics may have raised β inside the inner loop (TL-3)
        outer.beta = beta;
        match cfg.rule {
            Rule::Rule1 => outer_update_rule1(
                &mut outer.lambda,
                &mut outer.beta,
                &z,
                z_prev.as_deref(),
                cfg.theta,
                cfg.c,
                cfg.lambda_bound,
            ),
            Rule::Rule2 => {
                let e0 = *eta0.get_or_insert(norm2(&z));
                outer_update_rule2(
                    &mut outer.lambda,
                    &mut outer.beta,
                    &z,
                    e0 / outer.k as f64,
                    cfg.c,
                    cfg.lambda_bound,
                );
            }
        }
        z_prev = Some(z);
        outer.k += 1;
    };
    let inner = engine.state();
    let consensus = problem.coupling().consensus_residual(&inner.x, &inner.xbar);
    Ok(TwoLevelResult {
        state: problem.stitch(&inner.x)?,
        objective: problem.cost(&inner.x),
        consensus_norm: norm2(&consensus),
        consensus_inf: norm_inf(&consensus),
        inner_iterations: trace.rows.len(),
        outer_iterations: outer.k,
        status,
        trace,
        inner,
        outer,
    })
}
