//! Seeded BFS region growing followed by greedy boundary refinement.

use std::collections::VecDeque;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::netmodel::PowerNetwork;

use super::Partition;

const MAX_PASSES: usize = 100;

/// Whether region `r` is connected, optionally pretending bus `without` has left it.
pub(super) fn region_connected(
    net: &PowerNetwork,
    region_of: &[usize],
    r: usize,
    without: Option<usize>,
) -> bool {
    let member = |i: usize| region_of[i] == r && Some(i) != without;
    let Some(start) = (0..region_of.len()).find(|&i| member(i)) else {
        return true;
    };
    let size = (0..region_of.len()).filter(|&i| member(i)).count();
    let mut seen = vec![false; region_of.len()];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for &v in net.neighbors(u) {
            if member(v) && !seen[v] {
                seen[v] = true;
                count += 1;
                queue.push_back(v);
            }
        }
    }
    count == size
}

fn hop_distances(net: &PowerNetwork, sources: &[usize]) -> Vec<usize> {
    let mut dist = vec![usize::MAX; net.n_buses()];
    let mut queue = VecDeque::new();
    for &s in sources {
        dist[s] = 0;
        queue.push_back(s);
    }
    while let Some(u) = queue.pop_front() {
        for &v in net.neighbors(u) {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    dist
}

struct Limits {
    lo: usize,
    hi: usize,
}

impl Limits {
    /// Sizes `s` with `|s − n/R| ≤ ⌈n/R⌉` and `s ≥ 1`.
    fn new(n: usize, regions: usize) -> Self {
        let ideal = n as f64 / regions as f64;
        let slack = n.div_ceil(regions) as f64;
        Limits {
            lo: ((ideal - slack).ceil() as i64).max(1) as usize,
            hi: (ideal + slack).floor() as usize,
        }
    }
}

/// Edges from `bus` into each region.
fn links(net: &PowerNetwork, region_of: &[usize], bus: usize, n_regions: usize) -> Vec<i64> {
    let mut c = vec![0i64; n_regions];
    for &v in net.neighbors(bus) {
        c[region_of[v]] += 1;
    }
    c
}

/// Splits the network into `regions` parts. The result depends only on the
/// inputs: seeds are drawn from a ChaCha8 stream seeded with `seed`, and all
/// later choices break ties towards the lowest bus index.
pub fn partition_bfs_kl(net: &PowerNetwork, regions: usize, seed: u64) -> Result<Partition> {
    let n = net.n_buses();
    if regions == 0 {
        return Err(Error::Partition("number of regions must be positive".into()));
    }
    if regions > n {
        return Err(Error::Partition(format!(
            "cannot split {n} buses into {regions} regions"
        )));
    }
    let limits = Limits::new(n, regions);
    let mut region_of = grow(net, regions, seed);
    rebalance(net, &mut region_of, regions, &limits);
    refine(net, &mut region_of, regions, &limits);
    let p = Partition::from_assignment(net, region_of)?;
    let bad = p.disconnected_regions(net);
    if !bad.is_empty() {
        warn!("partition regions {bad:?} are not connected");
    }
    Ok(p)
}

fn grow(net: &PowerNetwork, regions: usize, seed: u64) -> Vec<usize> {
    let n = net.n_buses();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seeds = vec![rng.gen_range(0..n)];
    while seeds.len() < regions {
        let dist = hop_distances(net, &seeds);
        let far = (0..n)
            .filter(|i| !seeds.contains(i))
            .max_by_key(|&i| (dist[i], std::cmp::Reverse(i)))
            .expect("regions <= buses");
        seeds.push(far);
    }

    const FREE: usize = usize::MAX;
    let mut region_of = vec![FREE; n];
    let mut size = vec![1usize; regions];
    let mut frontier: Vec<VecDeque<usize>> = Vec::with_capacity(regions);
    for (r, &s) in seeds.iter().enumerate() {
        region_of[s] = r;
        frontier.push(VecDeque::from([s]));
    }
    let mut assigned = regions;
    while assigned < n {
        // the smallest region that can still grow claims one bus
        let mut order: Vec<usize> = (0..regions).collect();
        order.sort_by_key(|&r| (size[r], r));
        let mut progressed = false;
        for r in order {
            let claim = loop {
                let Some(&u) = frontier[r].front() else {
                    break None;
                };
                match net.neighbors(u).iter().find(|&&v| region_of[v] == FREE) {
                    Some(&v) => break Some(v),
                    None => {
                        frontier[r].pop_front();
                    }
                }
            };
            if let Some(v) = claim {
                region_of[v] = r;
                size[r] += 1;
                frontier[r].push_back(v);
                assigned += 1;
                progressed = true;
                break;
            }
        }
        debug_assert!(progressed, "connected network always has a free neighbor");
        if !progressed {
            break;
        }
    }
    region_of
}

/// Moves boundary buses out of oversized regions into undersized neighbours,
/// preferring moves that cut the fewest extra edges.
fn rebalance(net: &PowerNetwork, region_of: &mut [usize], regions: usize, limits: &Limits) {
    let n = net.n_buses();
    let mut size = vec![0usize; regions];
    for &r in region_of.iter() {
        size[r] += 1;
    }
    for _ in 0..n * regions {
        let over = (0..regions).any(|r| size[r] > limits.hi);
        let under = (0..regions).any(|r| size[r] < limits.lo);
        if !over && !under {
            return;
        }
        let mut best: Option<(i64, usize, usize)> = None;
        for u in 0..n {
            let from = region_of[u];
            if size[from] <= limits.lo {
                continue;
            }
            let c = links(net, region_of, u, regions);
            for to in 0..regions {
                if to == from || c[to] == 0 {
                    continue;
                }
                let helps = size[from] > limits.hi || size[to] < limits.lo;
                if !helps || size[to] + 1 > limits.hi.max(size[from] - 1) {
                    continue;
                }
                let gain = c[to] - c[from];
                if best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, u, to));
                }
            }
        }
        let Some((_, u, to)) = best else {
            warn!("partition balance could not be reached");
            return;
        };
        size[region_of[u]] -= 1;
        size[to] += 1;
        region_of[u] = to;
    }
}

/// Kernighan–Lin style passes: single moves and pairwise swaps with positive
/// cut reduction, applied lowest bus index first, until none remain.
fn refine(net: &PowerNetwork, region_of: &mut [usize], regions: usize, limits: &Limits) {
    let n = net.n_buses();
    let mut size = vec![0usize; regions];
    for &r in region_of.iter() {
        size[r] += 1;
    }
    for _ in 0..MAX_PASSES {
        let mut improved = false;
        for u in 0..n {
            let from = region_of[u];
            if size[from] <= limits.lo {
                continue;
            }
            let c = links(net, region_of, u, regions);
            let best = (0..regions)
                .filter(|&to| to != from && size[to] < limits.hi)
                .map(|to| (c[to] - c[from], to))
                .filter(|&(g, _)| g > 0)
                .max_by_key(|&(g, to)| (g, std::cmp::Reverse(to)));
            if let Some((_, to)) = best {
                if keeps_connectivity(net, region_of, u, from) {
                    region_of[u] = to;
                    size[from] -= 1;
                    size[to] += 1;
                    improved = true;
                }
            }
        }
        for u in 0..n {
            for &v in net.neighbors(u) {
                let (a, b) = (region_of[u], region_of[v]);
                if v <= u || a == b {
                    continue;
                }
                let cu = links(net, region_of, u, regions);
                let cv = links(net, region_of, v, regions);
                // u and v are adjacent, so the edge between them stays cut
                let gain = (cu[b] - 1 - cu[a]) + (cv[a] - 1 - cv[b]);
                if gain > 0
                    && keeps_connectivity(net, region_of, u, a)
                    && keeps_connectivity(net, region_of, v, b)
                {
                    region_of[u] = b;
                    region_of[v] = a;
                    improved = true;
                }
            }
        }
        if !improved {
            return;
        }
    }
}

/// A move may not split a region that is currently connected.
fn keeps_connectivity(net: &PowerNetwork, region_of: &[usize], bus: usize, r: usize) -> bool {
    !region_connected(net, region_of, r, None) || region_connected(net, region_of, r, Some(bus))
}
