//! Region assignment and the boundary bookkeeping derived from it.
//!
//! All bus references here are bus *indices* into [`PowerNetwork::buses`].
//! For a region `r`, `B(R_r)` are its buses touched by a tie-line and
//! `δ(R_r)` are the foreign buses it reaches through tie-lines. For a bus `j`,
//! the owner `R(j)` is its region and the sharers `N(j)` are the regions
//! holding a copy of `j`.

mod grow;

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::PowerNetwork;

pub use grow::partition_bfs_kl;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    region_of: Vec<usize>,
    regions: Vec<Vec<usize>>,
    tie_lines: Vec<(usize, usize)>,
    boundary: Vec<Vec<usize>>,
    copies: Vec<Vec<usize>>,
    sharers: Vec<Vec<usize>>,
}

impl Partition {
    /// Validates `region_of` (one entry per bus, regions `0..R` all used) and
    /// derives the boundary structure.
    pub fn from_assignment(net: &PowerNetwork, region_of: Vec<usize>) -> Result<Self> {
        let n = net.n_buses();
        if region_of.len() != n {
            return Err(Error::Partition(format!(
                "assignment covers {} buses, network has {n}",
                region_of.len()
            )));
        }
        let n_regions = region_of.iter().max().map_or(0, |m| m + 1);
        let mut regions = vec![Vec::new(); n_regions];
        for (i, &r) in region_of.iter().enumerate() {
            regions[r].push(i);
        }
        if let Some(r) = regions.iter().position(Vec::is_empty) {
            return Err(Error::Partition(format!("region {r} is empty")));
        }

        let tie_lines: Vec<(usize, usize)> = net
            .edges()
            .into_iter()
            .filter(|&(i, j)| region_of[i] != region_of[j])
            .collect();
        let mut boundary = vec![BTreeSet::new(); n_regions];
        let mut copies = vec![BTreeSet::new(); n_regions];
        let mut sharers = vec![BTreeSet::new(); n];
        for &(i, j) in &tie_lines {
            let (ri, rj) = (region_of[i], region_of[j]);
            boundary[ri].insert(i);
            boundary[rj].insert(j);
            copies[ri].insert(j);
            copies[rj].insert(i);
            sharers[j].insert(ri);
            sharers[i].insert(rj);
        }
        let collect = |v: Vec<BTreeSet<usize>>| -> Vec<Vec<usize>> {
            v.into_iter().map(|s| s.into_iter().collect()).collect()
        };
        Ok(Partition {
            region_of,
            regions,
            tie_lines,
            boundary: collect(boundary),
            copies: collect(copies),
            sharers: collect(sharers),
        })
    }

    pub fn single(net: &PowerNetwork) -> Self {
        Self::from_assignment(net, vec![0; net.n_buses()]).expect("one region always valid")
    }

    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn n_buses(&self) -> usize {
        self.region_of.len()
    }

    /// Owner `R(j)`.
    pub fn region_of(&self, bus: usize) -> usize {
        self.region_of[bus]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.region_of
    }

    /// Buses of region `r`, ascending.
    pub fn region(&self, r: usize) -> &[usize] {
        &self.regions[r]
    }

    pub fn regions(&self) -> &[Vec<usize>] {
        &self.regions
    }

    /// Undirected inter-region edges `(min, max)`, ascending.
    pub fn tie_lines(&self) -> &[(usize, usize)] {
        &self.tie_lines
    }

    /// `B(R_r)`, ascending.
    pub fn boundary(&self, r: usize) -> &[usize] {
        &self.boundary[r]
    }

    /// `δ(R_r)`, ascending.
    pub fn copies(&self, r: usize) -> &[usize] {
        &self.copies[r]
    }

    /// `N(j)`, ascending; empty for buses not on a tie-line.
    pub fn sharers(&self, bus: usize) -> &[usize] {
        &self.sharers[bus]
    }

    /// Boundary buses with at least one sharer, ascending. These are the
    /// buses that receive a global copy.
    pub fn coupled_buses(&self) -> Vec<usize> {
        (0..self.n_buses()).filter(|&j| !self.sharers[j].is_empty()).collect()
    }

    /// Whether every region induces a connected subgraph.
    pub fn disconnected_regions(&self, net: &PowerNetwork) -> Vec<usize> {
        (0..self.n_regions())
            .filter(|&r| !grow::region_connected(net, &self.region_of, r, None))
            .collect()
    }

    pub fn report(&self, net: &PowerNetwork) -> PartitionReport {
        let id = |i: usize| net.buses()[i].id;
        let ids = |v: &[usize]| v.iter().map(|&i| id(i)).collect::<Vec<_>>();
        PartitionReport {
            format_version: PARTITION_FORMAT_VERSION,
            n_regions: self.n_regions(),
            regions: self.regions.iter().map(|r| ids(r)).collect(),
            tie_lines: self.tie_lines.iter().map(|&(i, j)| (id(i), id(j))).collect(),
            boundary: self.boundary.iter().map(|b| ids(b)).collect(),
            copies: self.copies.iter().map(|c| ids(c)).collect(),
            sharers: self
                .coupled_buses()
                .into_iter()
                .map(|j| (id(j), self.sharers[j].clone()))
                .collect(),
        }
    }

    /// `bus_id region` lines, one per bus in index order.
    pub fn to_assignment_text(&self, net: &PowerNetwork) -> String {
        let mut s = String::new();
        for (i, r) in self.region_of.iter().enumerate() {
            s.push_str(&format!("{} {}\n", net.buses()[i].id, r));
        }
        s
    }
}

pub const PARTITION_FORMAT_VERSION: u32 = 1;

/// Serializable view of a [`Partition`] using external bus ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionReport {
    pub format_version: u32,
    pub n_regions: usize,
    pub regions: Vec<Vec<usize>>,
    pub tie_lines: Vec<(usize, usize)>,
    pub boundary: Vec<Vec<usize>>,
    pub copies: Vec<Vec<usize>>,
    /// `(bus id, sharing regions)` for every coupled bus.
    pub sharers: BTreeMap<usize, Vec<usize>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AssignmentJson {
    Pairs(Vec<(usize, usize)>),
    Dense(Vec<usize>),
}

/// Reads an assignment: either `bus_id region` lines (`#` starts a comment)
/// or a JSON array holding one region per bus in index order, or
/// `[bus_id, region]` pairs.
pub fn parse_assignment(net: &PowerNetwork, text: &str) -> Result<Vec<usize>> {
    let pairs: Vec<(usize, usize)> = if text.trim_start().starts_with('[') {
        let parsed: AssignmentJson = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            msg: e.to_string(),
        })?;
        match parsed {
            AssignmentJson::Pairs(p) => p,
            AssignmentJson::Dense(d) => {
                if d.len() != net.n_buses() {
                    return Err(Error::Partition(format!(
                        "assignment covers {} buses, network has {}",
                        d.len(),
                        net.n_buses()
                    )));
                }
                return Ok(d);
            }
        }
    } else {
        let mut out = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = || Error::Parse {
                line: k + 1,
                msg: format!("expected `bus_id region`, got `{line}`"),
            };
            let mut it = line.split_whitespace();
            let bus = it.next().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
            let region = it.next().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
            if it.next().is_some() {
                return Err(bad());
            }
            out.push((bus, region));
        }
        out
    };
    let mut assignment: Vec<Option<usize>> = vec![None; net.n_buses()];
    for (id, region) in pairs {
        let i = net
            .bus_index(id)
            .ok_or_else(|| Error::Partition(format!("assignment names unknown bus {id}")))?;
        if assignment[i].replace(region).is_some() {
            return Err(Error::Partition(format!("bus {id} assigned twice")));
        }
    }
    assignment
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            r.ok_or_else(|| {
                Error::Partition(format!("bus {} has no region", net.buses()[i].id))
            })
        })
        .collect()
}

pub fn partition_from_file(net: &PowerNetwork, text: &str) -> Result<Partition> {
    let p = Partition::from_assignment(net, parse_assignment(net, text)?)?;
    let bad = p.disconnected_regions(net);
    if !bad.is_empty() {
        warn!("regions {bad:?} are not connected");
    }
    Ok(p)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::netmodel::{Branch, Bus, BusKind, Generator};

    /// Path `1–2–…–n` with bus 1 the slack and a generator there.
    pub(crate) fn path(n: usize) -> PowerNetwork {
        let buses = (1..=n)
            .map(|id| Bus {
                id,
                kind: if id == 1 { BusKind::Slack } else { BusKind::Pq },
                p_d: if id == 1 { 0.0 } else { 0.1 },
                q_d: 0.0,
                v_min: 0.9,
                v_max: 1.1,
                shunt_gs: 0.0,
                shunt_bs: 0.0,
            })
            .collect();
        let branches = (0..n - 1)
            .map(|k| Branch {
                from: k,
                to: k + 1,
                r: 0.01,
                x: 0.1,
                b_charge: 0.0,
                tap: 1.0,
                s_max: 0.0,
                in_service: true,
            })
            .collect();
        let gens = vec![Generator {
            bus: 0,
            p_min: 0.0,
            p_max: 2.0,
            q_min: -2.0,
            q_max: 2.0,
            cost_c2: 1.0,
            cost_c1: 1.0,
            cost_c0: 0.0,
        }];
        PowerNetwork::new(100.0, buses, gens, branches).unwrap()
    }

    #[test]
    fn single_region_has_no_boundary() {
        let net = path(4);
        let p = Partition::from_assignment(&net, vec![0; 4]).unwrap();
        assert_eq!(p, Partition::single(&net));
        assert_eq!(p.n_regions(), 1);
        assert!(p.tie_lines().is_empty());
        assert!(p.boundary(0).is_empty() && p.copies(0).is_empty());
        assert!(p.coupled_buses().is_empty());
    }

    #[test]
    fn path_split_in_two() {
        let net = path(4);
        let p = Partition::from_assignment(&net, vec![0, 0, 1, 1]).unwrap();
        assert_eq!(p.tie_lines(), &[(1, 2)]);
        assert_eq!(p.boundary(0), &[1]);
        assert_eq!(p.copies(0), &[2]);
        assert_eq!(p.sharers(2), &[0]);
        assert_eq!(p.region_of(2), 1);
        assert_eq!(p.coupled_buses(), vec![1, 2]);
    }

    #[test]
    fn gap_in_regions_rejected() {
        let net = path(4);
        assert!(matches!(
            Partition::from_assignment(&net, vec![0, 0, 2, 2]),
            Err(Error::Partition(_))
        ));
        assert!(Partition::from_assignment(&net, vec![0, 0, 1]).is_err());
    }

    #[test]
    fn assignment_formats() {
        let net = path(4);
        let text = "# bus region\n1 0\n2 0\n3 1\n4 1\n";
        assert_eq!(parse_assignment(&net, text).unwrap(), vec![0, 0, 1, 1]);
        assert_eq!(parse_assignment(&net, "[0,0,1,1]").unwrap(), vec![0, 0, 1, 1]);
        assert_eq!(
            parse_assignment(&net, "[[4,1],[3,1],[2,0],[1,0]]").unwrap(),
            vec![0, 0, 1, 1]
        );
        assert!(parse_assignment(&net, "1 0\n2 0\n3 1\n").is_err());
        assert!(matches!(
            parse_assignment(&net, "1 0\n2 x\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(parse_assignment(&net, "1 0\n1 1\n").is_err());
    }

    #[test]
    fn assignment_text_round_trip() {
        let net = path(5);
        let p = Partition::from_assignment(&net, vec![1, 1, 0, 0, 2]).unwrap();
        let q = partition_from_file(&net, &p.to_assignment_text(&net)).unwrap();
        assert_eq!(p, q);
    }
}
