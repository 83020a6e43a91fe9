//! Rectangular-coordinate AC network model.
//!
//! A [`PowerNetwork`] holds buses, aggregated per-bus generators, branches and
//! the nodal admittance `Y = G + jB`. All quantities are per-unit on
//! `base_mva`; generator cost coefficients are in $/h over per-unit power.

mod admittance;
mod case;
mod power;

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

pub use admittance::{build_admittance, BranchAdmittance};
pub use case::{
    matpower_bus_areas, parse_case, parse_json_case, parse_matpower, BranchRecord, CaseFile,
    GeneratorRecord, CASE_FORMAT_VERSION,
};
pub use power::{
    flow_forms, full_residuals, injection_forms, line_flow, line_flow_between, line_flow_gradient,
    objective, objective_gradient, power_injection, power_injection_gradient, vmag_form,
    BusPartials, NetworkResiduals,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    pub p_d: f64,
    pub q_d: f64,
    pub v_min: f64,
    pub v_max: f64,
    #[serde(default)]
    pub shunt_gs: f64,
    #[serde(default)]
    pub shunt_bs: f64,
}

/// Generation at one bus. `bus` is an index into [`PowerNetwork::buses`].
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub cost_c2: f64,
    pub cost_c1: f64,
    pub cost_c0: f64,
}

impl Generator {
    pub fn cost(&self, p: f64) -> f64 {
        (self.cost_c2 * p + self.cost_c1) * p + self.cost_c0
    }

    pub fn marginal_cost(&self, p: f64) -> f64 {
        2.0 * self.cost_c2 * p + self.cost_c1
    }
}

/// A π-model branch; `from`/`to` are bus indices. `s_max == 0` means unlimited.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    pub b_charge: f64,
    pub tap: f64,
    pub s_max: f64,
    pub in_service: bool,
}

impl Branch {
    pub fn is_limited(&self) -> bool {
        self.in_service && self.s_max > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BranchEnd {
    From,
    To,
}

/// Voltages and generation for every bus, in bus-index order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectState {
    pub e: Vec<f64>,
    pub f: Vec<f64>,
    pub p_g: Vec<f64>,
    pub q_g: Vec<f64>,
}

impl RectState {
    /// `(e, f, p_g, q_g) = (1, 0, 0, 0)` everywhere.
    pub fn flat(n: usize) -> Self {
        RectState {
            e: vec![1.0; n],
            f: vec![0.0; n],
            p_g: vec![0.0; n],
            q_g: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerNetwork {
    base_mva: f64,
    buses: Vec<Bus>,
    generators: Vec<Generator>,
    branches: Vec<Branch>,
    g: CsrMatrix,
    b: CsrMatrix,
    gen_at_bus: Vec<Option<usize>>,
    neighbors: Vec<Vec<usize>>,
    slack: usize,
}

impl PowerNetwork {
    /// Validates the data, merges generators sharing a bus (limits and cost
    /// coefficients summed) and assembles the admittance matrix.
    pub fn new(
        base_mva: f64,
        buses: Vec<Bus>,
        generators: Vec<Generator>,
        branches: Vec<Branch>,
    ) -> Result<Self> {
        if !(base_mva > 0.0) {
            return Err(Error::Validation(format!("base_mva must be positive, got {base_mva}")));
        }
        if buses.is_empty() {
            return Err(Error::Validation("network has no buses".into()));
        }
        let mut seen = HashMap::new();
        for (k, bus) in buses.iter().enumerate() {
            if seen.insert(bus.id, k).is_some() {
                return Err(Error::Validation(format!("duplicate bus id {}", bus.id)));
            }
            if !(bus.v_min > 0.0 && bus.v_min <= bus.v_max) {
                return Err(Error::Validation(format!(
                    "bus {}: voltage bounds must satisfy 0 < v_min <= v_max (got {}, {})",
                    bus.id, bus.v_min, bus.v_max
                )));
            }
        }
        let n = buses.len();
        for g in &generators {
            if g.bus >= n {
                return Err(Error::Validation(format!("generator at unknown bus index {}", g.bus)));
            }
            let id = buses[g.bus].id;
            if g.p_min > g.p_max || g.q_min > g.q_max {
                return Err(Error::Validation(format!("generator at bus {id}: inverted limits")));
            }
            if g.cost_c2 < 0.0 {
                return Err(Error::Validation(format!(
                    "generator at bus {id}: negative quadratic cost"
                )));
            }
        }
        for br in &branches {
            if br.from >= n || br.to >= n {
                return Err(Error::Validation("branch references unknown bus".into()));
            }
            if br.from == br.to {
                return Err(Error::Validation(format!(
                    "branch is a self-loop at bus {}",
                    buses[br.from].id
                )));
            }
            if !(br.tap > 0.0) {
                return Err(Error::Validation(format!(
                    "branch ({}, {}): tap ratio must be positive",
                    buses[br.from].id, buses[br.to].id
                )));
            }
            if br.s_max < 0.0 {
                return Err(Error::Validation(format!(
                    "branch ({}, {}): negative flow limit",
                    buses[br.from].id, buses[br.to].id
                )));
            }
        }

        let generators = aggregate_generators(generators);
        let mut gen_at_bus = vec![None; n];
        for (k, g) in generators.iter().enumerate() {
            gen_at_bus[g.bus] = Some(k);
        }

        let mut neighbors = vec![Vec::new(); n];
        for br in branches.iter().filter(|b| b.in_service) {
            neighbors[br.from].push(br.to);
            neighbors[br.to].push(br.from);
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
            nb.dedup();
        }
        if !is_connected(&neighbors) {
            return Err(Error::Validation(
                "network is not connected (after removing out-of-service branches)".into(),
            ));
        }
        let slacks: Vec<usize> = (0..n).filter(|&i| buses[i].kind == BusKind::Slack).collect();
        let slack = match slacks.as_slice() {
            [] => return Err(Error::Validation("no slack bus".into())),
            [s] => *s,
            many => {
                return Err(Error::Validation(format!(
                    "{} slack buses in one connected network",
                    many.len()
                )))
            }
        };

        let (g, b) = build_admittance(&buses, &branches)?;
        Ok(PowerNetwork {
            base_mva,
            buses,
            generators,
            branches,
            g,
            b,
            gen_at_bus,
            neighbors,
            slack,
        })
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    /// Real part of the nodal admittance matrix.
    pub fn g(&self) -> &CsrMatrix {
        &self.g
    }

    /// Imaginary part of the nodal admittance matrix.
    pub fn b(&self) -> &CsrMatrix {
        &self.b
    }

    pub fn generator_at(&self, bus: usize) -> Option<&Generator> {
        self.gen_at_bus[bus].map(|k| &self.generators[k])
    }

    /// Buses adjacent to `bus` through in-service branches, sorted.
    pub fn neighbors(&self, bus: usize) -> &[usize] {
        &self.neighbors[bus]
    }

    pub fn slack_bus(&self) -> usize {
        self.slack
    }

    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn branch_admittance(&self, k: usize) -> BranchAdmittance {
        BranchAdmittance::of(&self.branches[k])
    }

    /// In-service branch indices in input order.
    pub fn active_branches(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.branches.len()).filter(|&k| self.branches[k].in_service)
    }

    /// Undirected in-service edges `(min, max)` without duplicates from
    /// parallel branches.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = self
            .active_branches()
            .map(|k| {
                let br = &self.branches[k];
                (br.from.min(br.to), br.from.max(br.to))
            })
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    pub fn flat_start(&self) -> RectState {
        RectState::flat(self.n_buses())
    }
}

fn aggregate_generators(gens: Vec<Generator>) -> Vec<Generator> {
    let mut by_bus: BTreeMap<usize, Generator> = BTreeMap::new();
    for g in gens {
        by_bus
            .entry(g.bus)
            .and_modify(|acc| {
                acc.p_min += g.p_min;
                acc.p_max += g.p_max;
                acc.q_min += g.q_min;
                acc.q_max += g.q_max;
                acc.cost_c2 += g.cost_c2;
                acc.cost_c1 += g.cost_c1;
                acc.cost_c0 += g.cost_c0;
            })
            .or_insert(g);
    }
    by_bus.into_values().collect()
}

fn is_connected(neighbors: &[Vec<usize>]) -> bool {
    let n = neighbors.len();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for &v in &neighbors[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                queue.push_back(v);
            }
        }
    }
    count == n
}
