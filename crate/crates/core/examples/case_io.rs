//! Reads a MATPOWER or JSON case, prints its size and the flat-start
//! mismatch, and with `--json` prints the case in JSON form.
//!
//!     cargo run --example case_io -- data/case9.m --json > case9.json

use tladmm::netmodel::{full_residuals, parse_case, CaseFile};

fn main() -> tladmm::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/case9.m").into());
    let json = args.any(|a| a == "--json");
    let text = std::fs::read_to_string(&path).expect("readable case file");
    let net = parse_case(&text)?;
    if json {
        println!("{}", CaseFile::from_network(&net).to_json_pretty()?);
        return Ok(());
    }
    println!(
        "{path}: {} buses, {} generators, {} branches, base {} MVA",
        net.n_buses(),
        net.generators().len(),
        net.branches().len(),
        net.base_mva()
    );
    let res = full_residuals(&net, &net.flat_start())?;
    println!("largest constraint violation at flat start: {:.4}", res.max_violation());
    Ok(())
}
