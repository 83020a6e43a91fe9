#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use tladmm::netmodel::{parse_matpower, Branch, Bus, BusKind, Generator, PowerNetwork};
use tladmm::partition::{partition_bfs_kl, partition_from_file, Partition};
use tladmm::reform::{build_distributed, DistributedProblem};

pub const CASE9: &str = include_str!("../../data/case9.m");
pub const CASE30: &str = include_str!("../../data/case30.m");
pub const CASE30_R3: &str = include_str!("../../data/case30_r3.txt");

pub fn data(name: &str) -> String {
    format!("{}/data/{name}", env!("CARGO_MANIFEST_DIR"))
}

pub fn case9() -> PowerNetwork {
    parse_matpower(CASE9).unwrap()
}

pub fn case30() -> PowerNetwork {
    parse_matpower(CASE30).unwrap()
}

pub fn case9_r2() -> DistributedProblem {
    let net = case9();
    build_distributed(&net, &partition_bfs_kl(&net, 2, 0).unwrap()).unwrap()
}

pub fn case30_r3() -> DistributedProblem {
    let net = case30();
    build_distributed(&net, &partition_from_file(&net, CASE30_R3).unwrap()).unwrap()
}

/// Random connected network: a random spanning tree plus `extra` chords.
pub fn random_network(rng: &mut impl Rng, n: usize, extra: usize) -> PowerNetwork {
    let buses = (1..=n)
        .map(|id| Bus {
            id,
            kind: if id == 1 { BusKind::Slack } else { BusKind::Pq },
            p_d: 0.1,
            q_d: 0.0,
            v_min: 0.9,
            v_max: 1.1,
            shunt_gs: 0.0,
            shunt_bs: 0.0,
        })
        .collect();
    let branch = |from, to| Branch {
        from,
        to,
        r: 0.01,
        x: 0.1,
        b_charge: 0.0,
        tap: 1.0,
        s_max: 0.0,
        in_service: true,
    };
    let mut branches: Vec<Branch> = (1..n).map(|k| branch(rng.gen_range(0..k), k)).collect();
    for _ in 0..extra {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a != b {
            branches.push(branch(a.min(b), a.max(b)));
        }
    }
    let gens = vec![Generator {
        bus: 0,
        p_min: 0.0,
        p_max: 10.0,
        q_min: -10.0,
        q_max: 10.0,
        cost_c2: 1.0,
        cost_c1: 1.0,
        cost_c0: 0.0,
    }];
    PowerNetwork::new(100.0, buses, gens, branches).unwrap()
}

/// Random assignment of `n` buses to `regions` non-empty regions.
pub fn random_partition(rng: &mut impl Rng, net: &PowerNetwork, regions: usize) -> Partition {
    let n = net.n_buses();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut region_of = vec![0; n];
    for (k, &bus) in order.iter().enumerate() {
        region_of[bus] = if k < regions { k } else { rng.gen_range(0..regions) };
    }
    Partition::from_assignment(net, region_of).unwrap()
}

/// Smallest root of a nondecreasing function on `[lo, hi]` by bisection,
/// clamped to the interval.
pub fn bisect_root(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    if f(lo) >= 0.0 {
        return lo;
    }
    if f(hi) <= 0.0 {
        return hi;
    }
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return mid;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}
