//! Solves a whole case with the augmented-Lagrangian NLP solver.

use tladmm::netmodel::{full_residuals, parse_case};
use tladmm::nlp::{solve_centralized, Tolerances};

fn main() -> tladmm::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/case9.m").into());
    let net = parse_case(&std::fs::read_to_string(&path).expect("readable case file"))?;
    let sol = solve_centralized(&net, &Tolerances::default())?;
    println!(
        "objective {:.4}, converged {}, KKT residual {:.2e}, {} iterations",
        sol.objective, sol.converged, sol.kkt_residual, sol.iterations
    );
    println!("largest violation: {:.2e}", full_residuals(&net, &sol.state)?.max_violation());
    Ok(())
}
