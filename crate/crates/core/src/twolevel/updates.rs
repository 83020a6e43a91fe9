//! Closed-form block updates and penalty rules, one coupling row at a time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest value any penalty (`ρ` or `β`) may take.
pub const PENALTY_CAP: f64 = 1e24;

/// One sharer's contribution to a global-copy update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XbarInput {
    pub y: f64,
    pub x: f64,
    pub z: f64,
    pub rho: f64,
}

/// Minimizer over `[−bound, bound]` of `Σ_l [−y_l·x̄ + ρ_l/2 (x_l − x̄ + z_l)²]`:
/// the `ρ`-weighted average of `x_l + z_l + y_l/ρ_l`, clamped.
pub fn update_xbar_row(inputs: &[XbarInput], bound: f64) -> Result<f64> {
    if inputs.is_empty() {
        return Err(Error::InvalidArgument("global copy has no sharers".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for s in inputs {
        num += s.y + s.rho * (s.x + s.z);
        den += s.rho;
    }
    Ok((num / den).clamp(-bound, bound))
}

/// `z = (−λ − y − ρ(x − x̄)) / (β + ρ)`.
pub fn update_slack_row(lambda: f64, y: f64, rho: f64, beta: f64, x: f64, xbar: f64) -> f64 {
    (-lambda - y - rho * (x - xbar)) / (beta + rho)
}

/// `y + ρ·r` with `r = x − x̄ + z`.
pub fn update_dual_row(y: f64, rho: f64, residual: f64) -> f64 {
    y + rho * residual
}

/// Outer rule with projected multipliers and a shrink test on the slack.
///
/// `beta` is raised by `c` (capped) unless `‖z‖ ≤ θ‖z_prev‖`; with no
/// previous slack it is left alone.
pub fn outer_update_rule1(
    lambda: &mut [f64],
    beta: &mut [f64],
    z: &[f64],
    z_prev: Option<&[f64]>,
    theta: f64,
    c: f64,
    lambda_bound: f64,
) {
    for i in 0..lambda.len() {
        lambda[i] = (lambda[i] + beta[i] * z[i]).clamp(-lambda_bound, lambda_bound);
    }
    if let Some(prev) = z_prev {
        if norm2(z) > theta * norm2(prev) {
            grow(beta, c);
        }
    }
}

/// Outer rule alternating between a multiplier step (when `‖z‖ ≤ η`) and a
/// penalty step.
pub fn outer_update_rule2(lambda: &mut [f64], beta: &mut [f64], z: &[f64], eta: f64, c: f64, lambda_bound: f64) {
    if norm2(z) <= eta {
        for i in 0..lambda.len() {
            lambda[i] = (lambda[i] + beta[i] * z[i]).clamp(-lambda_bound, lambda_bound);
        }
    } else {
        grow(beta, c);
    }
}

pub(crate) fn grow(v: &mut [f64], factor: f64) {
    v.iter_mut().for_each(|b| *b = (*b * factor).min(PENALTY_CAP));
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub(crate) fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, a| m.max(a.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Heuristic {
    None,
    Tl1,
    Tl2,
    Tl3,
}

/// Penalties after one inner iteration.
///
/// `Tl1` compares the global residual norms, `Tl2` each row's residual and
/// `Tl3` each row's slack (raising `β_i` and tying `ρ_i = 2β_i`). The tests
/// are strict: a residual shrinking by exactly `θ` leaves the penalty alone.
#[allow(clippy::too_many_arguments)]
pub fn heuristic_step(
    heuristic: Heuristic,
    gamma: f64,
    theta: f64,
    residual: &[f64],
    residual_prev: &[f64],
    z: &[f64],
    z_prev: &[f64],
    rho: &mut [f64],
    beta: &mut [f64],
) {
    match heuristic {
        Heuristic::None => {}
        Heuristic::Tl1 => {
            if norm2(residual) > theta * norm2(residual_prev) {
                grow(rho, gamma);
            }
        }
        Heuristic::Tl2 => {
            for i in 0..rho.len() {
                if residual[i].abs() > theta * residual_prev[i].abs() {
                    rho[i] = (rho[i] * gamma).min(PENALTY_CAP);
                }
            }
        }
        Heuristic::Tl3 => {
            for i in 0..rho.len() {
                if z[i].abs() > theta * z_prev[i].abs() {
                    beta[i] = (beta[i] * gamma).min(PENALTY_CAP);
                }
                rho[i] = (2.0 * beta[i]).min(PENALTY_CAP);
            }
        }
    }
}
