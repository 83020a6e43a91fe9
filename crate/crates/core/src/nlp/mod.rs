//! Regional subproblem and centralized OPF solver.
//!
//! Both are solved by a PHR augmented Lagrangian: equalities get multipliers
//! plus a quadratic penalty, inequalities a squared hinge with multipliers,
//! and the bounds are kept by projection. Each augmented-Lagrangian
//! minimization runs projected L-BFGS.

mod lbfgs;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::{PowerNetwork, RectState};
use crate::partition::Partition;
use crate::reform::{build_distributed, Constraint, RegionBlock};

use nalgebra::DMatrix;

pub(crate) use lbfgs::{minimize_box, projected_gradient_norm, Preconditioner};

const MULTIPLIER_BOUND: f64 = 1e8;
const SIGMA_START: f64 = 10.0;
const SIGMA_MAX: f64 = 1e8;
/// Blocks with more variables than this use a diagonal curvature model.
const DENSE_LIMIT: usize = 1500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Projected KKT residual target (on the scaled problem).
    pub tol_stat: f64,
    /// Constraint violation target (on the scaled constraints).
    pub tol_feas: f64,
    /// L-BFGS iterations per augmented-Lagrangian subproblem.
    pub inner_cap: usize,
    /// Multiplier updates.
    pub outer_cap: usize,
    pub memory: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            tol_stat: 1e-6,
            tol_feas: 1e-7,
            inner_cap: 200,
            outer_cap: 50,
            memory: 10,
        }
    }
}

/// Multipliers and penalty of the augmented Lagrangian, reusable as a warm
/// start for the next solve of the same region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    pub equality: Vec<f64>,
    pub inequality: Vec<f64>,
    pub sigma: f64,
}

impl Multipliers {
    pub fn zeros(n_eq: usize, n_ineq: usize) -> Self {
        Multipliers {
            equality: vec![0.0; n_eq],
            inequality: vec![0.0; n_ineq],
            sigma: SIGMA_START,
        }
    }
}

/// The proximal coupling term of one row: `y·x_k + ρ/2 (x_k − target)²` with
/// `target = x̄ − z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotPenalty {
    pub local: usize,
    pub y: f64,
    pub rho: f64,
    pub target: f64,
}

/// The regional problem `min F(x) s.t. x feasible for the region`, where
/// `F = c_r + Σ slot penalties`.
#[derive(Debug, Clone)]
pub struct SubproblemSpec<'a> {
    pub block: &'a RegionBlock,
    pub slots: Vec<SlotPenalty>,
    pub warm_start: Vec<f64>,
    pub multipliers: Option<Multipliers>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NlpStatus {
    /// Candidate accepted and both tolerances met.
    ImprovedStationary,
    /// Candidate accepted without meeting the tolerances.
    Improved,
    /// Warm start returned because the candidate did not decrease `F`.
    KeptPrevious,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NlpResult {
    pub x: Vec<f64>,
    pub status: NlpStatus,
    /// Projected gradient of the Lagrangian at the candidate (scaled problem).
    pub kkt_residual: f64,
    /// Largest scaled constraint violation at the returned point.
    pub violation: f64,
    pub objective_before: f64,
    pub objective_after: f64,
    pub multipliers: Multipliers,
    pub iterations: usize,
}

/// Per-call KKT summary, for debugging dumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub status: NlpStatus,
    pub kkt_residual: f64,
    pub violation: f64,
    pub objective_before: f64,
    pub objective_after: f64,
    pub iterations: usize,
    pub equality_multipliers: Vec<f64>,
    pub inequality_multipliers: Vec<f64>,
}

impl NlpResult {
    pub fn kkt_report(&self) -> KktReport {
        KktReport {
            status: self.status,
            kkt_residual: self.kkt_residual,
            violation: self.violation,
            objective_before: self.objective_before,
            objective_after: self.objective_after,
            iterations: self.iterations,
            equality_multipliers: self.multipliers.equality.clone(),
            inequality_multipliers: self.multipliers.inequality.clone(),
        }
    }
}

/// `F(x) = c_r(x) + Σ_slots [y·x_k + ρ/2 (x_k − target)²]`.
#[allow(non_snake_case)]
pub fn objective_F(spec: &SubproblemSpec, x: &[f64]) -> f64 {
    let mut v = spec.block.cost(x);
    for s in &spec.slots {
        let d = x[s.local] - s.target;
        v += s.y * x[s.local] + 0.5 * s.rho * d * d;
    }
    v
}

#[allow(non_snake_case)]
pub fn gradient_F(spec: &SubproblemSpec, x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    add_gradient_f(spec, x, &mut g);
    g
}

fn add_gradient_f(spec: &SubproblemSpec, x: &[f64], g: &mut [f64]) {
    spec.block.add_cost_gradient(x, g);
    for s in &spec.slots {
        g[s.local] += s.y + s.rho * (x[s.local] - s.target);
    }
}

/// Scaled constraint set shared by the regional and centralized solves.
struct ScaledConstraints<'a> {
    eq: &'a [Constraint],
    ineq: &'a [Constraint],
    eq_scale: Vec<f64>,
    ineq_scale: Vec<f64>,
}

impl<'a> ScaledConstraints<'a> {
    fn new(block: &'a RegionBlock) -> Self {
        let scale = |c: &Constraint| 1.0 / c.magnitude().max(1.0);
        ScaledConstraints {
            eq: block.equalities(),
            ineq: block.inequalities(),
            eq_scale: block.equalities().iter().map(scale).collect(),
            ineq_scale: block.inequalities().iter().map(scale).collect(),
        }
    }

    fn values(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (
            self.eq.iter().zip(&self.eq_scale).map(|(c, s)| s * c.eval(x)).collect(),
            self.ineq.iter().zip(&self.ineq_scale).map(|(c, s)| s * c.eval(x)).collect(),
        )
    }

    fn violation(&self, x: &[f64]) -> f64 {
        let (h, g) = self.values(x);
        h.iter()
            .map(|v| v.abs())
            .chain(g.iter().map(|v| v.max(0.0)))
            .fold(0.0, f64::max)
    }

    /// Gauss-Newton model `diag(base) + σ Σ ∇c ∇cᵀ` over the equalities and
    /// the active or violated inequalities. Large blocks keep the diagonal.
    fn curvature_model(&self, x: &[f64], sigma: f64, nu: &[f64], base: Vec<f64>) -> Preconditioner {
        let n = x.len();
        let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
        let mut dense = vec![0.0; n];
        let mut push = |c: &Constraint, s: f64| {
            dense.iter_mut().for_each(|v| *v = 0.0);
            c.add_gradient(x, s, &mut dense);
            rows.push(dense.iter().enumerate().filter(|t| *t.1 != 0.0).map(|(i, v)| (i, *v)).collect());
        };
        for (c, s) in self.eq.iter().zip(&self.eq_scale) {
            push(c, *s);
        }
        for ((c, s), v) in self.ineq.iter().zip(&self.ineq_scale).zip(nu) {
            if *v > 0.0 || s * c.eval(x) > 0.0 {
                push(c, *s);
            }
        }
        if n > DENSE_LIMIT {
            let mut d = base;
            for row in &rows {
                for &(i, v) in row {
                    d[i] += sigma * v * v;
                }
            }
            let floor = 1e-6 * d.iter().fold(0.0f64, |m, v| m.max(*v)).max(1e-12);
            d.iter_mut().for_each(|v| *v = v.max(floor));
            return Preconditioner::Diagonal(d);
        }
        let mut m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(base));
        for row in &rows {
            for &(i, a) in row {
                for &(j, b) in row {
                    m[(i, j)] += sigma * a * b;
                }
            }
        }
        let floor = 1e-6 * (0..n).map(|i| m[(i, i)]).fold(0.0f64, f64::max).max(1e-12);
        for i in 0..n {
            m[(i, i)] = m[(i, i)].max(floor);
        }
        Preconditioner::dense(m)
    }

    /// `Σ w_i ∇h_i + Σ v_j ∇g_j` added into `grad` (weights on scaled rows).
    fn add_weighted_gradient(&self, x: &[f64], w_eq: &[f64], w_in: &[f64], grad: &mut [f64]) {
        for ((c, s), w) in self.eq.iter().zip(&self.eq_scale).zip(w_eq) {
            if *w != 0.0 {
                c.add_gradient(x, s * w, grad);
            }
        }
        for ((c, s), w) in self.ineq.iter().zip(&self.ineq_scale).zip(w_in) {
            if *w != 0.0 {
                c.add_gradient(x, s * w, grad);
            }
        }
    }
}

struct AlOutcome {
    x: Vec<f64>,
    multipliers: Multipliers,
    kkt: f64,
    violation: f64,
    converged: bool,
    iterations: usize,
}

/// PHR augmented Lagrangian on `min s·obj(x)` over the block's box and constraints.
fn augmented_lagrangian(
    block: &RegionBlock,
    obj: &dyn Fn(&[f64], &mut [f64]) -> f64,
    obj_diag: &[f64],
    scale: f64,
    x0: &[f64],
    warm: Option<Multipliers>,
    tol: &Tolerances,
) -> Result<AlOutcome> {
    let cons = ScaledConstraints::new(block);
    let (lo, hi) = (block.lower(), block.upper());
    let n = x0.len();
    let mut mult = match warm {
        Some(m) if m.equality.len() == cons.eq.len() && m.inequality.len() == cons.ineq.len() => m,
        _ => Multipliers::zeros(cons.eq.len(), cons.ineq.len()),
    };
    let mut x = x0.to_vec();
    lbfgs::project(&mut x, lo, hi);
    let mut fg = vec![0.0; n];
    if !obj(&x, &mut fg).is_finite() || fg.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "objective",
            point: x,
        });
    }

    let mut prev_violation = cons.violation(&x);
    let mut omega: f64 = 1e-2;
    let mut iterations = 0;
    let mut kkt = f64::INFINITY;
    let mut violation = prev_violation;
    let mut converged = false;
    for _ in 0..tol.outer_cap {
        let sigma = mult.sigma;
        let (mu, nu) = (mult.equality.clone(), mult.inequality.clone());
        let mut w_eq = vec![0.0; cons.eq.len()];
        let mut w_in = vec![0.0; cons.ineq.len()];
        let mut lagr = |x: &[f64], grad: &mut [f64]| -> f64 {
            grad.iter_mut().for_each(|v| *v = 0.0);
            let mut val = scale * obj(x, grad);
            grad.iter_mut().for_each(|v| *v *= scale);
            let (h, g) = cons.values(x);
            for i in 0..h.len() {
                val += mu[i] * h[i] + 0.5 * sigma * h[i] * h[i];
                w_eq[i] = mu[i] + sigma * h[i];
            }
            for j in 0..g.len() {
                let t = (nu[j] + sigma * g[j]).max(0.0);
                val += (t * t - nu[j] * nu[j]) / (2.0 * sigma);
                w_in[j] = t;
            }
            cons.add_weighted_gradient(x, &w_eq, &w_in, grad);
            val
        };
        let base: Vec<f64> = obj_diag.iter().map(|v| scale * v).collect();
        let mut pre = cons.curvature_model(&x, sigma, &nu, base);
        let out = minimize_box(
            &mut lagr,
            &mut x,
            lo,
            hi,
            omega.max(tol.tol_stat),
            tol.inner_cap,
            tol.memory,
            &mut pre,
        );
        iterations += out.iterations;
        if !out.value.is_finite() {
            return Err(Error::NonFinite {
                what: "augmented Lagrangian",
                point: x,
            });
        }

        let (h, g) = cons.values(&x);
        for i in 0..h.len() {
            mult.equality[i] =
                (mult.equality[i] + sigma * h[i]).clamp(-MULTIPLIER_BOUND, MULTIPLIER_BOUND);
        }
        let mut complementarity: f64 = 0.0;
        for j in 0..g.len() {
            mult.inequality[j] = (mult.inequality[j] + sigma * g[j]).clamp(0.0, MULTIPLIER_BOUND);
            complementarity = complementarity.max((-g[j]).min(mult.inequality[j]).abs());
        }
        violation = h
            .iter()
            .map(|v| v.abs())
            .chain(g.iter().map(|v| v.max(0.0)))
            .fold(0.0, f64::max);

        let mut grad = vec![0.0; n];
        obj(&x, &mut grad);
        grad.iter_mut().for_each(|v| *v *= scale);
        cons.add_weighted_gradient(&x, &mult.equality, &mult.inequality, &mut grad);
        kkt = projected_gradient_norm(&x, &grad, lo, hi);

        if kkt <= tol.tol_stat && violation <= tol.tol_feas && complementarity <= tol.tol_feas {
            converged = true;
            break;
        }
        if violation > tol.tol_feas && violation > 0.25 * prev_violation {
            mult.sigma = (mult.sigma * 10.0).min(SIGMA_MAX);
        }
        prev_violation = violation;
        omega *= 0.1;
    }
    Ok(AlOutcome {
        x,
        multipliers: mult,
        kkt,
        violation,
        converged,
        iterations,
    })
}

/// Feasibility threshold, on the scaled constraints, below which a warm
/// start counts as feasible for the descent safeguard.
const FEASIBLE_WARM_START: f64 = 1e-6;

/// Approximately solves the regional subproblem from `spec.warm_start`.
///
/// The result never has a larger `F` than a feasible warm start: when the
/// candidate fails to decrease `F` (or is infeasible while the warm start is
/// not), the warm start is returned with [`NlpStatus::KeptPrevious`].
pub fn solve_subproblem(spec: &SubproblemSpec, tol: &Tolerances) -> Result<NlpResult> {
    let block = spec.block;
    if spec.warm_start.len() != block.dim() {
        return Err(Error::Layout {
            expected: block.dim(),
            got: spec.warm_start.len(),
        });
    }
    let mut magnitude = block.cost_magnitude();
    for s in &spec.slots {
        if !(s.rho > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "coupling penalty must be positive, got {}",
                s.rho
            )));
        }
        magnitude = magnitude.max(s.rho).max(s.y.abs());
    }
    let scale = 1.0 / magnitude.max(1.0);
    let obj = |x: &[f64], g: &mut [f64]| {
        add_gradient_f(spec, x, g);
        objective_F(spec, x)
    };
    let cons = ScaledConstraints::new(block);
    let mut warm = spec.warm_start.clone();
    block.project(&mut warm);
    let before = objective_F(spec, &warm);
    let warm_violation = cons.violation(&warm);

    let mut obj_diag = block.cost_curvature();
    for s in &spec.slots {
        obj_diag[s.local] += s.rho;
    }
    let out = augmented_lagrangian(
        block,
        &obj,
        &obj_diag,
        scale,
        &warm,
        spec.multipliers.clone(),
        tol,
    )?;
    let after = objective_F(spec, &out.x);
    let warm_feasible = warm_violation <= FEASIBLE_WARM_START;
    let keep = warm_feasible && (after > before || out.violation > FEASIBLE_WARM_START);
    Ok(if keep {
        NlpResult {
            x: warm,
            status: NlpStatus::KeptPrevious,
            kkt_residual: out.kkt,
            violation: warm_violation,
            objective_before: before,
            objective_after: before,
            multipliers: out.multipliers,
            iterations: out.iterations,
        }
    } else {
        NlpResult {
            x: out.x,
            status: if out.converged {
                NlpStatus::ImprovedStationary
            } else {
                NlpStatus::Improved
            },
            kkt_residual: out.kkt,
            violation: out.violation,
            objective_before: before,
            objective_after: after,
            multipliers: out.multipliers,
            iterations: out.iterations,
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentralizedSolution {
    pub state: RectState,
    pub objective: f64,
    pub converged: bool,
    pub kkt_residual: f64,
    pub violation: f64,
    pub iterations: usize,
}

/// Solves the full OPF from flat start with the same augmented Lagrangian.
pub fn solve_centralized(net: &PowerNetwork, tol: &Tolerances) -> Result<CentralizedSolution> {
    let problem = build_distributed(net, &Partition::single(net))?;
    let block = problem.block(0);
    let x0 = problem.flat_start().remove(0);
    let scale = 1.0 / block.cost_magnitude().max(1.0);
    let obj = |x: &[f64], g: &mut [f64]| {
        block.add_cost_gradient(x, g);
        block.cost(x)
    };
    let out = augmented_lagrangian(block, &obj, &block.cost_curvature(), scale, &x0, None, tol)?;
    let state = problem.stitch(std::slice::from_ref(&out.x))?;
    Ok(CentralizedSolution {
        objective: block.cost(&out.x),
        state,
        converged: out.converged,
        kkt_residual: out.kkt,
        violation: out.violation,
        iterations: out.iterations,
    })
}

#[cfg(test)]
mod tests;
