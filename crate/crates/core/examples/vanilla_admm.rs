//! Plain two-block ADMM on case30 with the shipped partition. Prints the
//! consensus residual every 100 iterations.
//!
//!     cargo run --release --example vanilla_admm -- 3000 2000

use tladmm::baselines::vanilla_admm;
use tladmm::netmodel::parse_matpower;
use tladmm::nlp::Tolerances;
use tladmm::partition::partition_from_file;
use tladmm::reform::build_distributed;

fn main() -> tladmm::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let rho: f64 = args.first().map_or(3000.0, |s| s.parse().expect("rho"));
    let iters: usize = args.get(1).map_or(500, |s| s.parse().expect("iterations"));
    let net = parse_matpower(include_str!("../data/case30.m"))?;
    let problem = build_distributed(&net, &partition_from_file(&net, include_str!("../data/case30_r3.txt"))?)?;
    let run = vanilla_admm(&problem, rho, iters, Tolerances::default())?;
    let tol = (problem.n_rows() as f64).sqrt() * 2e-4;
    for row in run.trace.rows.iter().filter(|r| r.iteration % 100 == 0 || r.iteration == 1) {
        println!("{:>5}  ‖r‖ {:.3e}  objective {:.3}", row.iteration, row.consensus_norm, row.objective);
    }
    let last = run.trace.rows.last().expect("at least one iteration");
    println!("final ‖r‖ {:.3e} against tolerance {tol:.3e}", last.consensus_norm);
    Ok(())
}
