//! Splits a case into regions and prints the tie-lines and shared buses.
//!
//!     cargo run --example partition -- data/case30.m 3 0

use tladmm::netmodel::parse_case;
use tladmm::partition::partition_bfs_kl;

fn main() -> tladmm::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let path = args.first().cloned().unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/case30.m").into());
    let regions = args.get(1).map_or(3, |s| s.parse().expect("region count"));
    let seed = args.get(2).map_or(0, |s| s.parse().expect("seed"));
    let net = parse_case(&std::fs::read_to_string(&path).expect("readable case file"))?;
    let part = partition_bfs_kl(&net, regions, seed)?;
    let report = part.report(&net);
    for (r, buses) in report.regions.iter().enumerate() {
        println!("region {r}: {} buses, boundary {:?}, copies {:?}", buses.len(), report.boundary[r], report.copies[r]);
    }
    println!("tie-lines: {:?}", report.tie_lines);
    print!("{}", part.to_assignment_text(&net));
    Ok(())
}
