//! Certifies a two-level run: stationarity residuals at the returned point
//! and the iteration-complexity constants for the same instance.

use tladmm::diagnostics::{
    complexity_bounds, feasibility_stationarity, stationarity_residuals, BoundInputs, Residual, UpperBound,
};
use tladmm::netmodel::parse_matpower;
use tladmm::partition::partition_bfs_kl;
use tladmm::reform::build_distributed;
use tladmm::twolevel::{two_level_solve, TwoLevelConfig};

fn main() -> tladmm::Result<()> {
    let net = parse_matpower(include_str!("../data/case9.m"))?;
    let problem = build_distributed(&net, &partition_bfs_kl(&net, 2, 0)?)?;
    let cfg = TwoLevelConfig::default();
    let res = two_level_solve(&problem, &cfg)?;
    let s = &res.inner;
    let report = stationarity_residuals(s, &problem, &s.beta, &s.lambda, Residual::Consensus)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    println!("feasibility stationarity: {:.3e}", feasibility_stationarity(&problem, &s.x, &s.xbar));

    let inputs = BoundInputs {
        beta0: cfg.beta0,
        c: cfg.c,
        epsilon: (problem.n_rows() as f64).sqrt() * cfg.epsilon,
        lambda_bound: cfg.lambda_bound,
        upper: UpperBound::FlatStart,
        big_lambda: None,
    };
    let bounds = complexity_bounds(&problem, &inputs)?;
    println!("K1 = {}, T(K1) = {:.3e}; observed {} outer, {} inner", bounds.k1, bounds.t_k1, res.outer_iterations, res.inner_iterations);
    Ok(())
}
