//! Reference methods: vanilla two-block ADMM on the slack-free consensus
//! problem, and the centralized solve.

use crate::error::{Error, Result};
use crate::nlp::Tolerances;
use crate::reform::DistributedProblem;
use crate::twolevel::{min_max, Engine, InnerState, SlackMode, Trace, TraceRow};

pub use crate::nlp::{solve_centralized, CentralizedSolution};

#[derive(Debug, Clone)]
pub struct VanillaRun {
    pub trace: Trace,
    pub state: InnerState,
}

impl VanillaRun {
    /// `‖Ax + Bx̄‖₂` per iteration.
    pub fn residuals(&self) -> Vec<f64> {
        self.trace.rows.iter().map(|r| r.consensus_norm).collect()
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.trace.rows.iter().map(|r| r.objective).collect()
    }
}

/// Vanilla ADMM from the flat start with `y = 0`.
pub fn vanilla_admm(problem: &DistributedProblem, rho: f64, max_iter: usize, tol: Tolerances) -> Result<VanillaRun> {
    let x0 = problem.flat_start();
    let xbar0 = problem.xbar_from_blocks(&x0);
    let y0 = vec![0.0; problem.n_rows()];
    vanilla_admm_from(problem, rho, max_iter, tol, x0, xbar0, &y0)
}

/// Vanilla ADMM from `(x⁰, x̄⁰, y⁰)`. Runs all `max_iter` iterations unless
/// the residual is exactly zero; it never declares convergence.
pub fn vanilla_admm_from(
    problem: &DistributedProblem,
    rho: f64,
    max_iter: usize,
    tol: Tolerances,
    x0: Vec<Vec<f64>>,
    xbar0: Vec<f64>,
    y0: &[f64],
) -> Result<VanillaRun> {
    if !(rho > 0.0) {
        return Err(Error::InvalidArgument(format!("rho must be positive, got {rho}")));
    }
    let d = problem.n_rows();
    if y0.len() != d {
        return Err(Error::Layout { expected: d, got: y0.len() });
    }
    let mut engine = Engine::new(problem, x0, xbar0, tol, 0, SlackMode::Zero)?;
    let rho_v = vec![rho; d];
    engine.restart(&vec![0.0; d], &vec![0.0; d], &rho_v);
    engine.set_duals(y0);
    let mut trace = Trace::default();
    let (rho_min, rho_max) = min_max(&rho_v);
    for t in 1..=max_iter {
        let r = engine.step()?;
        let norm = crate::twolevel::norm2(&r.consensus);
        trace.rows.push(TraceRow {
            outer: 1,
            inner: t,
            iteration: t,
            residual_norm: norm,
            consensus_norm: norm,
            consensus_inf: crate::twolevel::norm_inf(&r.consensus),
            slack_norm: 0.0,
            slack_step: 0.0,
            objective: r.objective,
            rho_min,
            rho_max,
            beta_min: 0.0,
            beta_max: 0.0,
            kept_previous: r.kept_previous,
            stationary: r.stationary,
            dual_identity: 0.0,
            residual_identity: 0.0,
        });
        if norm == 0.0 {
            break;
        }
    }
    Ok(VanillaRun {
        trace,
        state: engine.state(),
    })
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::netmodel::{parse_matpower, Bus, PowerNetwork};
    use crate::partition::{partition_bfs_kl, tests::path, Partition};
    use crate::reform::build_distributed;

    #[test]
    fn consensus_start_is_a_fixed_point() {
        let net = path(4);
        let buses = net.buses().iter().map(|b| Bus { p_d: 0.0, ..b.clone() }).collect();
        let net = PowerNetwork::new(100.0, buses, net.generators().to_vec(), net.branches().to_vec()).unwrap();
        let part = Partition::from_assignment(&net, vec![0, 0, 1, 1]).unwrap();
        let problem = build_distributed(&net, &part).unwrap();
        let run = vanilla_admm(&problem, 1000.0, 5, Tolerances::default()).unwrap();
        assert_eq!(run.trace.rows.len(), 1);
        assert_eq!(run.residuals(), vec![0.0]);
    }

    #[test]
    fn runs_the_full_budget() {
        let net = parse_matpower(include_str!("../data/case9.m")).unwrap();
        let problem = build_distributed(&net, &partition_bfs_kl(&net, 2, 0).unwrap()).unwrap();
        let run = vanilla_admm(&problem, 1000.0, 7, Tolerances::default()).unwrap();
        assert_eq!(run.trace.rows.len(), 7);
        assert!(run.trace.rows.iter().all(|r| r.slack_norm == 0.0 && r.residual_norm == r.consensus_norm));
        assert!(vanilla_admm(&problem, 0.0, 7, Tolerances::default()).is_err());
    }

    /// One vanilla iteration and one three-block iteration with `z = 0` and
    /// `λ = −y` move `x` and `x̄` identically; only the dual step differs, by
    /// exactly the slack term.
    #[test]
    fn shares_the_three_block_code_path() {
        let net = parse_matpower(include_str!("../data/case9.m")).unwrap();
        let problem = build_distributed(&net, &partition_bfs_kl(&net, 2, 0).unwrap()).unwrap();
        let d = problem.n_rows();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let mut x = problem.flat_start();
            for (r, block) in x.iter_mut().zip(problem.blocks()) {
                for (i, v) in r.iter_mut().enumerate() {
                    *v = rng.gen_range(block.lower()[i]..=block.upper()[i]);
                }
            }
            let xbar = problem.xbar_from_blocks(&x);
            let y: Vec<f64> = (0..d).map(|_| rng.gen_range(-50.0..50.0)).collect();
            let rho = rng.gen_range(500.0..5000.0);
            let tol = Tolerances::default();

            let vanilla = vanilla_admm_from(&problem, rho, 1, tol, x.clone(), xbar.clone(), &y).unwrap();
            let mut three = Engine::new(&problem, x, xbar, tol, 0, SlackMode::Free).unwrap();
            let lambda: Vec<f64> = y.iter().map(|v| -v).collect();
            three.restart(&lambda, &vec![1000.0; d], &vec![rho; d]);
            three.step().unwrap();
            let (a, b) = (&vanilla.state, three.state());
            assert_eq!(a.x, b.x);
            assert_eq!(a.xbar, b.xbar);
            for i in 0..d {
                let gap: f64 = problem.coupling().consensus_residual(&a.x, &a.xbar)[i];
                assert!((a.y[i] - (y[i] + rho * gap)).abs() <= 1e-9 * (1.0 + a.y[i].abs()));
                assert!((b.y[i] - (a.y[i] + rho * b.z[i])).abs() <= 1e-9 * (1.0 + b.y[i].abs()));
            }
        }
    }
}
