//! Two-level ADMM on case9 split in two, once per penalty heuristic, against
//! the centralized objective.

use tladmm::netmodel::parse_matpower;
use tladmm::nlp::{solve_centralized, Tolerances};
use tladmm::partition::partition_bfs_kl;
use tladmm::reform::build_distributed;
use tladmm::twolevel::{two_level_solve, Heuristic, TwoLevelConfig};

fn main() -> tladmm::Result<()> {
    env_logger::init();
    let net = parse_matpower(include_str!("../data/case9.m"))?;
    let problem = build_distributed(&net, &partition_bfs_kl(&net, 2, 0)?)?;
    let central = solve_centralized(&net, &Tolerances::default())?.objective;
    println!("centralized: {central:.4}");
    for heuristic in [Heuristic::Tl1, Heuristic::Tl2, Heuristic::Tl3] {
        let res = two_level_solve(&problem, &TwoLevelConfig { heuristic, ..Default::default() })?;
        println!(
            "{heuristic:?}: {:?} after {} outer / {} inner, objective {:.4} ({:+.2}%), ‖r‖∞ {:.1e}",
            res.status,
            res.outer_iterations,
            res.inner_iterations,
            res.objective,
            100.0 * (res.objective - central) / central,
            res.consensus_inf
        );
    }
    Ok(())
}
