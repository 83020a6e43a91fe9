//! Certificates for iterates and partitions: stationarity residuals,
//! feasibility-problem stationarity, coupling-matrix norms and the
//! iteration-complexity constants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reform::{CouplingSystem, DistributedProblem};
use crate::sparse::{spectral_norm, CsrMatrix};
use crate::twolevel::{norm2, InnerState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    /// `None` when the state has no previous iterate.
    pub d1_norm: Option<f64>,
    pub d2_norm: Option<f64>,
    pub d3_norm: f64,
    /// Largest of the available residual norms.
    pub epsilon: f64,
    /// `‖λ + β∘z + y‖∞`.
    pub dual_identity_violation: f64,
    #[serde(skip)]
    pub d1: Option<Vec<Vec<f64>>>,
    #[serde(skip)]
    pub d2: Option<Vec<f64>>,
    #[serde(skip)]
    pub d3: Vec<f64>,
}

/// Which problem `d3` certifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Residual {
    /// `Ax + Bx̄`.
    Consensus,
    /// `Ax + Bx̄ + z`.
    Relaxed,
}

/// Residuals `(d1, d2, d3)` at the latest inner iterate.
///
/// `d1 = Aᵀ(ρ∘(Bx̄ᵗ⁻¹ + zᵗ⁻¹ − Bx̄ᵗ − zᵗ))` and `d2 = Bᵀ(ρ∘(zᵗ − zᵗ⁻¹))`
/// are what is left of the block optimality conditions after the dual step;
/// they need the previous `(x̄, z)` stored in the state.
pub fn stationarity_residuals(
    state: &InnerState,
    problem: &DistributedProblem,
    beta: &[f64],
    lambda: &[f64],
    which: Residual,
) -> Result<StationarityReport> {
    let coupling = problem.coupling();
    let d = coupling.n_rows();
    for len in [state.z.len(), state.y.len(), state.rho.len(), beta.len(), lambda.len()] {
        if len != d {
            return Err(Error::Layout { expected: d, got: len });
        }
    }
    let d3 = match which {
        Residual::Consensus => coupling.consensus_residual(&state.x, &state.xbar),
        Residual::Relaxed => coupling.residual(&state.x, &state.xbar, &state.z),
    };
    let dual_identity_violation = (0..d)
        .map(|i| (lambda[i] + beta[i] * state.z[i] + state.y[i]).abs())
        .fold(0.0, f64::max);
    let (d1, d2) = match &state.previous {
        Some((xbar_prev, z_prev)) => {
            let mut w1 = vec![0.0; d];
            let mut w2 = vec![0.0; d];
            for (i, row) in coupling.rows().iter().enumerate() {
                let k = row.xbar;
                // Bx̄ is −x̄ row-wise
                w1[i] = state.rho[i] * (state.xbar[k] - xbar_prev[k] + z_prev[i] - state.z[i]);
                w2[i] = state.rho[i] * (state.z[i] - z_prev[i]);
            }
            let dims: Vec<usize> = problem.blocks().iter().map(|b| b.dim()).collect();
            (Some(coupling.at_times(&w1, &dims)), Some(coupling.bt_times(&w2)))
        }
        None => (None, None),
    };
    let d1_norm = d1.as_ref().map(|v| norm2(&v.concat()));
    let d2_norm = d2.as_ref().map(|v| norm2(v));
    let d3_norm = norm2(&d3);
    let epsilon = [d1_norm, d2_norm, Some(d3_norm)].into_iter().flatten().fold(0.0, f64::max);
    Ok(StationarityReport {
        d1_norm,
        d2_norm,
        d3_norm,
        epsilon,
        dual_identity_violation,
        d1,
        d2,
        d3,
    })
}

/// Gradient of `½‖Ax + Bx̄‖²` in `x` (per block) and `x̄`.
pub fn feasibility_gradient(problem: &DistributedProblem, x: &[Vec<f64>], xbar: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let coupling = problem.coupling();
    let r = coupling.consensus_residual(x, xbar);
    let dims: Vec<usize> = x.iter().map(Vec::len).collect();
    (coupling.at_times(&r, &dims), coupling.bt_times(&r))
}

/// Norm of the box-projected gradient of `½‖Ax + Bx̄‖²` over the block boxes
/// and the hypercube. Zero at stationary points of the feasibility problem.
pub fn feasibility_stationarity(problem: &DistributedProblem, x: &[Vec<f64>], xbar: &[f64]) -> f64 {
    let (gx, gxbar) = feasibility_gradient(problem, x, xbar);
    let mut sq = 0.0;
    for ((g, xr), block) in gx.iter().zip(x).zip(problem.blocks()) {
        for i in 0..g.len() {
            let p = projected(g[i], xr[i], block.lower()[i], block.upper()[i]);
            sq += p * p;
        }
    }
    for (k, bound) in problem.coupling().hypercube().bounds().iter().enumerate() {
        let p = projected(gxbar[k], xbar[k], -bound, *bound);
        sq += p * p;
    }
    sq.sqrt()
}

/// Gradient component that survives at a box face: descent directions
/// pointing out of the box are dropped.
fn projected(g: f64, v: f64, lo: f64, hi: f64) -> f64 {
    if v <= lo {
        g.min(0.0)
    } else if v >= hi {
        g.max(0.0)
    } else {
        g
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatrixNormReport {
    pub n_rows: usize,
    /// False when the partition has no shared buses; the other fields are
    /// then zero.
    pub coupled: bool,
    pub a_norm: f64,
    pub a_expected: f64,
    pub b_norm: f64,
    pub b_expected: f64,
    pub ata_diagonal: bool,
    pub btb_diagonal: bool,
}

impl MatrixNormReport {
    pub fn holds(&self, tol: f64) -> bool {
        !self.coupled
            || ((self.a_norm - self.a_expected).abs() <= tol
                && (self.b_norm - self.b_expected).abs() <= tol
                && self.ata_diagonal
                && self.btb_diagonal)
    }

    pub fn summary(&self) -> String {
        if !self.coupled {
            return "no coupling".into();
        }
        format!(
            "‖A‖ = {:.12} (expected {}), ‖B‖ = {:.12} (expected {:.12}), AᵀA diagonal: {}, BᵀB diagonal: {}",
            self.a_norm, self.a_expected, self.b_norm, self.b_expected, self.ata_diagonal, self.btb_diagonal
        )
    }
}

/// Power-iteration norms of `A` and `B` against `1` and `√max_copies`.
pub fn matrix_norm_checks(coupling: &CouplingSystem) -> MatrixNormReport {
    let d = coupling.n_rows();
    if d == 0 {
        return MatrixNormReport {
            n_rows: 0,
            coupled: false,
            a_norm: 0.0,
            a_expected: 0.0,
            b_norm: 0.0,
            b_expected: 0.0,
            ata_diagonal: true,
            btb_diagonal: true,
        };
    }
    let (a, b) = (coupling.a_matrix(), coupling.b_matrix());
    MatrixNormReport {
        n_rows: d,
        coupled: true,
        a_norm: spectral_norm(&a, 100_000, 1e-15),
        a_expected: 1.0,
        b_norm: spectral_norm(&b, 100_000, 1e-15),
        b_expected: (coupling.max_copies() as f64).sqrt(),
        ata_diagonal: gram_is_diagonal(&a),
        btb_diagonal: gram_is_diagonal(&b),
    }
}

/// Whether `MᵀM` has no off-diagonal entries.
fn gram_is_diagonal(m: &CsrMatrix) -> bool {
    let mut off = std::collections::BTreeMap::<(usize, usize), f64>::new();
    for i in 0..m.nrows() {
        let row: Vec<(usize, f64)> = m.row(i).collect();
        for (p, &(j, u)) in row.iter().enumerate() {
            for &(k, v) in &row[p + 1..] {
                *off.entry((j.min(k), j.max(k))).or_default() += u * v;
            }
        }
    }
    off.values().all(|v| *v == 0.0)
}

/// Choice of the upper bound `L̄` on the augmented Lagrangian at the
/// inner-loop starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum UpperBound {
    /// Cost at the flat start (where `Ax⁰ + Bx̄⁰ = 0` and `z⁰ = 0`).
    FlatStart,
    /// Largest cost over the boxes.
    BoxMax,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundInputs {
    pub beta0: f64,
    pub c: f64,
    /// Target on `‖Ax + Bx̄‖₂`.
    pub epsilon: f64,
    /// Bound on each multiplier, `λ ∈ [−b, b]ᵈ`.
    pub lambda_bound: f64,
    pub upper: UpperBound,
    /// Bound on `‖λᵏ + βᵏzᵏ‖`, if known; enables `K2`.
    pub big_lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexityConstants {
    pub tau: f64,
    pub m: f64,
    pub l_upper: f64,
    pub l_lower: f64,
    pub r_max: f64,
    pub k1: u64,
    pub k2: Option<u64>,
    /// `T(K1)`.
    pub t_k1: f64,
    pub beta0: f64,
    pub c: f64,
    pub epsilon: f64,
}

impl ComplexityConstants {
    /// Bound on the total number of inner iterations over `k` outer ones.
    pub fn t_of_k(&self, k: u64) -> f64 {
        t_of_k(self.beta0, self.c, self.epsilon, self.l_upper - self.l_lower, self.tau, k)
    }
}

pub fn t_of_k(beta0: f64, c: f64, epsilon: f64, gap: f64, tau: f64, k: u64) -> f64 {
    let lead = 4.0 * beta0 * gap * tau * tau * c / (c - 1.0);
    (lead * (c.powf(k as f64) - 1.0) / (epsilon * epsilon)).ceil() + k as f64
}

fn ceil_log(c: f64, v: f64) -> u64 {
    // rounding in ln(v)/ln(c) must not push exact powers up by one
    let e = v.ln() / c.ln();
    let r = e.round();
    let k = if (e - r).abs() <= 1e-12 * r.abs().max(1.0) { r } else { e.ceil() };
    k.max(1.0) as u64
}

/// `K1 = ⌈log_c(2(L̄ − L̲ + M·r_max)/(β⁰ε²))⌉`, at least 1.
pub fn k1(beta0: f64, c: f64, epsilon: f64, gap: f64, m: f64, r_max: f64) -> u64 {
    ceil_log(c, 2.0 * (gap + m * r_max) / (beta0 * epsilon * epsilon))
}

/// `K2 = max{⌈log_c(1/(β⁰τ))⌉, ⌈log_c(2(Λ + M)/(β⁰ε))⌉}`, at least 1.
pub fn k2(beta0: f64, c: f64, epsilon: f64, tau: f64, big_lambda: f64, m: f64) -> u64 {
    ceil_log(c, 1.0 / (beta0 * tau)).max(ceil_log(c, 2.0 * (big_lambda + m) / (beta0 * epsilon)))
}

/// `max ‖Ax + Bx̄‖₂` over the block boxes and the hypercube.
pub fn r_max(problem: &DistributedProblem) -> f64 {
    let coupling = problem.coupling();
    let bounds = coupling.hypercube().bounds();
    let mut sq = 0.0;
    for (k, &vb) in bounds.iter().enumerate() {
        // convex in x̄_k, so the maximum sits at a face
        let at = |xb: f64| -> f64 {
            coupling
                .rows_of_xbar(k)
                .iter()
                .map(|&i| {
                    let row = coupling.rows()[i];
                    let block = problem.block(row.region);
                    let (lo, hi) = (block.lower()[row.local], block.upper()[row.local]);
                    (lo - xb).powi(2).max((hi - xb).powi(2))
                })
                .sum()
        };
        sq += at(-vb).max(at(vb));
    }
    sq.sqrt()
}

pub fn complexity_bounds(problem: &DistributedProblem, inputs: &BoundInputs) -> Result<ComplexityConstants> {
    let BoundInputs {
        beta0,
        c,
        epsilon,
        lambda_bound,
        upper,
        big_lambda,
    } = *inputs;
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(c > 1.0) {
        return Err(Error::InvalidArgument(format!("c must exceed 1, got {c}")));
    }
    if !(beta0 > 0.0) || !(lambda_bound >= 0.0) {
        return Err(Error::InvalidArgument("beta0 must be positive and lambda_bound nonnegative".into()));
    }
    let coupling = problem.coupling();
    let d = coupling.n_rows();
    let (a_norm, b_norm) = if d == 0 { (0.0f64, 0.0) } else { (1.0, (coupling.max_copies() as f64).sqrt()) };
    let tau = (2.0 * a_norm).max(2.0 * b_norm).max(1.0 / (2.0 * beta0));
    let m = lambda_bound * (d as f64).sqrt();
    let (box_min, box_max) = problem
        .blocks()
        .iter()
        .map(|b| b.cost_range())
        .fold((0.0, 0.0), |(lo, hi), (a, b)| (lo + a, hi + b));
    let l_lower = box_min - m * m / beta0;
    let l_upper = match upper {
        UpperBound::FlatStart => problem.cost(&problem.flat_start()),
        UpperBound::BoxMax => box_max,
        UpperBound::Value(v) => v,
    };
    let r = r_max(problem);
    let gap = l_upper - l_lower;
    let k1 = k1(beta0, c, epsilon, gap, m, r);
    Ok(ComplexityConstants {
        tau,
        m,
        l_upper,
        l_lower,
        r_max: r,
        k1,
        k2: big_lambda.map(|bl| k2(beta0, c, epsilon, tau, bl, m)),
        t_k1: t_of_k(beta0, c, epsilon, gap, tau, k1),
        beta0,
        c,
        epsilon,
    })
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::netmodel::{parse_matpower, Bus, PowerNetwork};
    use crate::nlp::{gradient_F, SlotPenalty, SubproblemSpec, Tolerances};
    use crate::partition::{partition_bfs_kl, tests::path, Partition};
    use crate::reform::build_distributed;
    use crate::twolevel::{Engine, SlackMode};

    fn unloaded_path(n: usize) -> PowerNetwork {
        let net = path(n);
        let buses = net.buses().iter().map(|b| Bus { p_d: 0.0, ..b.clone() }).collect();
        PowerNetwork::new(net.base_mva(), buses, net.generators().to_vec(), net.branches().to_vec()).unwrap()
    }

    fn path_split() -> DistributedProblem {
        let net = path(4);
        build_distributed(&net, &Partition::from_assignment(&net, vec![0, 0, 1, 1]).unwrap()).unwrap()
    }

    #[test]
    fn k1_spot_checks() {
        assert_eq!(k1(1.0, 2.0, 1.0, 1.0, 0.0, 0.0), 1);
        assert_eq!(k1(1.0, 2.0, 0.1, 1.0, 0.0, 0.0), 8);
    }

    #[test]
    fn t_of_k_is_nondecreasing() {
        let problem = path_split();
        let inputs = BoundInputs {
            beta0: 1000.0,
            c: 6.0,
            epsilon: 1e-3,
            lambda_bound: 1e12,
            upper: UpperBound::FlatStart,
            big_lambda: Some(1.0),
        };
        let b = complexity_bounds(&problem, &inputs).unwrap();
        assert!(b.k1 >= 1 && b.k2.unwrap() >= 1);
        assert!((1..20).all(|k| b.t_of_k(k) <= b.t_of_k(k + 1)));
        assert_eq!(b.t_k1, b.t_of_k(b.k1));
        assert!((b.tau - 2.0 * 2f64.sqrt()).abs() < 1e-15);
        assert!(complexity_bounds(&problem, &BoundInputs { c: 1.0, ..inputs }).is_err());
        assert!(complexity_bounds(&problem, &BoundInputs { epsilon: 0.0, ..inputs }).is_err());
        let boxed = complexity_bounds(&problem, &BoundInputs { upper: UpperBound::BoxMax, ..inputs }).unwrap();
        assert!(boxed.l_upper >= b.l_upper);
    }

    /// `r_max` against brute force over the box vertices.
    #[test]
    fn r_max_matches_vertex_enumeration() {
        let problem = path_split();
        let coupling = problem.coupling();
        let bounds = coupling.hypercube().bounds().to_vec();
        let d = coupling.n_rows();
        assert!(d <= 8);
        let mut best: f64 = 0.0;
        for mask in 0..(1u32 << (d + bounds.len())) {
            let mut x = problem.flat_start();
            for (i, row) in coupling.rows().iter().enumerate() {
                let b = problem.block(row.region);
                x[row.region][row.local] =
                    if mask >> i & 1 == 1 { b.upper()[row.local] } else { b.lower()[row.local] };
            }
            let xbar: Vec<f64> =
                (0..bounds.len()).map(|k| if mask >> (d + k) & 1 == 1 { bounds[k] } else { -bounds[k] }).collect();
            best = best.max(norm2(&coupling.consensus_residual(&x, &xbar)));
        }
        assert!((r_max(&problem) - best).abs() <= 1e-12);
    }

    #[test]
    fn path_norms_match_formulas() {
        let report = matrix_norm_checks(path_split().coupling());
        assert!(report.coupled);
        assert!((report.a_norm - 1.0).abs() <= 1e-8);
        assert!((report.b_norm - 2f64.sqrt()).abs() <= 1e-8);
        assert!(report.holds(1e-8));
    }

    #[test]
    fn case30_norms_match_formulas() {
        let net = parse_matpower(include_str!("../data/case30.m")).unwrap();
        let part = crate::partition::partition_from_file(&net, include_str!("../data/case30_r3.txt")).unwrap();
        let report = matrix_norm_checks(build_distributed(&net, &part).unwrap().coupling());
        assert!(report.holds(1e-8), "{}", report.summary());
    }

    #[test]
    fn no_coupling_is_reported() {
        let net = path(3);
        let problem = build_distributed(&net, &Partition::single(&net)).unwrap();
        let report = matrix_norm_checks(problem.coupling());
        assert!(!report.coupled);
        assert_eq!(report.summary(), "no coupling");
    }

    #[test]
    fn gram_check_detects_off_diagonal() {
        let m = CsrMatrix::from_triplets(1, 2, &[(0, 0, 1.0), (0, 1, 1.0)]);
        assert!(!gram_is_diagonal(&m));
    }

    #[test]
    fn fixed_point_has_zero_residuals() {
        let net = unloaded_path(4);
        let problem = build_distributed(&net, &Partition::from_assignment(&net, vec![0, 0, 1, 1]).unwrap()).unwrap();
        let x = problem.flat_start();
        let xbar = problem.xbar_from_blocks(&x);
        let d = problem.n_rows();
        let mut engine = Engine::new(&problem, x, xbar, Tolerances::default(), 0, SlackMode::Free).unwrap();
        let (lambda, beta) = (vec![0.0; d], vec![1000.0; d]);
        engine.restart(&lambda, &beta, &vec![2000.0; d]);
        engine.step().unwrap();
        let report = stationarity_residuals(&engine.state(), &problem, &beta, &lambda, Residual::Relaxed).unwrap();
        assert_eq!(report.epsilon, 0.0);
        assert_eq!(report.dual_identity_violation, 0.0);
        assert_eq!(report.d1_norm, Some(0.0));
    }

    #[test]
    fn missing_previous_reports_d3_only() {
        let problem = path_split();
        let x = problem.flat_start();
        let xbar = problem.xbar_from_blocks(&x);
        let d = problem.n_rows();
        let state = InnerState {
            x,
            xbar,
            z: vec![0.5; d],
            y: vec![0.0; d],
            lambda: vec![0.0; d],
            beta: vec![1.0; d],
            rho: vec![2.0; d],
            t: 0,
            previous: None,
        };
        let r = stationarity_residuals(&state, &problem, &state.beta, &state.lambda, Residual::Relaxed).unwrap();
        assert!(r.d1.is_none() && r.d2_norm.is_none());
        assert!((r.d3_norm - 0.5 * (d as f64).sqrt()).abs() < 1e-15);
        assert!((r.dual_identity_violation - 0.5).abs() < 1e-15);
        assert_eq!(r.epsilon, r.d3_norm);
    }

    /// A slack step `δ·e₁` with `ρ = 2β` leaves `‖d3‖ = δ/2` when the state is
    /// consistent with the slack update.
    #[test]
    fn slack_step_gives_half_residual() {
        let problem = path_split();
        let d = problem.n_rows();
        let x = problem.flat_start();
        let xbar = problem.xbar_from_blocks(&x);
        let (beta, rho, delta) = (3.0, 6.0, 0.01);
        // z = −(λ + y + ρ(x − x̄))/(β + ρ) with x = x̄, y = −λ − βz
        // gives x − x̄ + z = β(z_prev − z)/ρ
        let z_prev = vec![0.0; d];
        let mut z = vec![0.0; d];
        z[0] = -delta;
        let mut x_shift = x.clone();
        let row = problem.coupling().rows()[0];
        x_shift[row.region][row.local] += beta * (z_prev[0] - z[0]) / rho - z[0];
        let state = InnerState {
            x: x_shift,
            xbar: xbar.clone(),
            z,
            y: vec![0.0; d],
            lambda: vec![0.0; d],
            beta: vec![beta; d],
            rho: vec![rho; d],
            t: 2,
            previous: Some((xbar, z_prev)),
        };
        let r = stationarity_residuals(&state, &problem, &state.beta, &state.lambda, Residual::Relaxed).unwrap();
        assert!((r.d3_norm - delta / 2.0).abs() <= 1e-15);
        assert!((r.d2_norm.unwrap() - rho * delta).abs() <= 1e-12);
    }

    /// `d1` equals `(∇c + Aᵀyᵗ) − ∇F_r(xᵗ)` up to sign, with `F_r` the regional
    /// objective the x-update actually minimized.
    #[test]
    fn d1_matches_explicit_gradient_difference() {
        let net = parse_matpower(include_str!("../data/case9.m")).unwrap();
        let problem = build_distributed(&net, &partition_bfs_kl(&net, 2, 0).unwrap()).unwrap();
        let d = problem.n_rows();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = problem.flat_start();
        let xbar = problem.xbar_from_blocks(&x);
        let mut engine = Engine::new(&problem, x, xbar, Tolerances::default(), 0, SlackMode::Free).unwrap();
        let lambda: Vec<f64> = (0..d).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let beta = vec![1000.0; d];
        let rho: Vec<f64> = (0..d).map(|_| rng.gen_range(1500.0..3000.0)).collect();
        engine.restart(&lambda, &beta, &rho);
        for _ in 0..3 {
            let before = engine.state();
            engine.step().unwrap();
            let after = engine.state();
            let report = stationarity_residuals(&after, &problem, &beta, &lambda, Residual::Relaxed).unwrap();
            let d1 = report.d1.unwrap();
            let coupling = problem.coupling();
            for (r, block) in problem.blocks().iter().enumerate() {
                let slots: Vec<SlotPenalty> = coupling
                    .rows_of_region(r)
                    .iter()
                    .map(|&i| {
                        let row = coupling.rows()[i];
                        SlotPenalty {
                            local: row.local,
                            y: before.y[i],
                            rho: rho[i],
                            target: before.xbar[row.xbar] - before.z[i],
                        }
                    })
                    .collect();
                let spec = SubproblemSpec {
                    block,
                    slots,
                    warm_start: after.x[r].clone(),
                    multipliers: None,
                };
                let grad_f = gradient_F(&spec, &after.x[r]);
                let mut lhs = vec![0.0; block.dim()];
                block.add_cost_gradient(&after.x[r], &mut lhs);
                for &i in coupling.rows_of_region(r) {
                    lhs[coupling.rows()[i].local] += after.y[i];
                }
                for j in 0..block.dim() {
                    let scale = 1.0 + grad_f[j].abs();
                    assert!((lhs[j] - grad_f[j] + d1[r][j]).abs() <= 1e-8 * scale, "block {r} coord {j}");
                }
            }
        }
    }

    #[test]
    fn feasible_point_is_stationary() {
        let problem = path_split();
        let x = problem.flat_start();
        let xbar = problem.xbar_from_blocks(&x);
        assert_eq!(feasibility_stationarity(&problem, &x, &xbar), 0.0);
    }

    #[test]
    fn face_keeps_only_the_inward_component() {
        assert_eq!(projected(2.0, 1.0, -1.0, 1.0), 2.0);
        assert_eq!(projected(-2.0, 1.0, -1.0, 1.0), 0.0);
        assert_eq!(projected(2.0, -1.0, -1.0, 1.0), 0.0);
        assert_eq!(projected(-2.0, -1.0, -1.0, 1.0), -2.0);
    }

    /// Interior points: the analytic gradient against central differences of
    /// `½‖r‖²`, and the stationarity measure against its norm.
    #[test]
    fn gradient_matches_finite_differences() {
        let net = parse_matpower(include_str!("../data/case9.m")).unwrap();
        let problem = build_distributed(&net, &partition_bfs_kl(&net, 3, 1).unwrap()).unwrap();
        let coupling = problem.coupling();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let half = |x: &[Vec<f64>], xb: &[f64]| 0.5 * norm2(&coupling.consensus_residual(x, xb)).powi(2);
        for _ in 0..10 {
            let mut x = problem.flat_start();
            for (xr, b) in x.iter_mut().zip(problem.blocks()) {
                for (i, v) in xr.iter_mut().enumerate() {
                    let (lo, hi) = (b.lower()[i], b.upper()[i]);
                    *v = if lo < hi { lo + (hi - lo) * rng.gen_range(0.1..0.9) } else { lo };
                }
            }
            let xbar: Vec<f64> = coupling.hypercube().bounds().iter().map(|v| v * rng.gen_range(-0.9..0.9)).collect();
            let (gx, gxbar) = feasibility_gradient(&problem, &x, &xbar);
            let h = 1e-6;
            for r in 0..x.len() {
                for i in 0..x[r].len() {
                    let (mut p, mut m) = (x.clone(), x.clone());
                    p[r][i] += h;
                    m[r][i] -= h;
                    let fd = (half(&p, &xbar) - half(&m, &xbar)) / (2.0 * h);
                    assert!((fd - gx[r][i]).abs() <= 1e-6 * (1.0 + fd.abs()));
                }
            }
            for k in 0..xbar.len() {
                let (mut p, mut m) = (xbar.clone(), xbar.clone());
                p[k] += h;
                m[k] -= h;
                let fd = (half(&x, &p) - half(&x, &m)) / (2.0 * h);
                assert!((fd - gxbar[k]).abs() <= 1e-6 * (1.0 + fd.abs()));
            }
            // fixed coordinates (lo == hi) sit on both faces and drop out
            let mut sq = 0.0;
            for ((g, xr), b) in gx.iter().zip(&x).zip(problem.blocks()) {
                for i in 0..g.len() {
                    sq += projected(g[i], xr[i], b.lower()[i], b.upper()[i]).powi(2);
                }
            }
            sq += gxbar.iter().map(|v| v * v).sum::<f64>();
            assert!((feasibility_stationarity(&problem, &x, &xbar) - sq.sqrt()).abs() <= 1e-12);
        }
    }
}
