use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::netmodel::{
    flow_forms, injection_forms, line_flow, power_injection, vmag_form, BranchEnd,
    NetworkResiduals, PowerNetwork, RectState,
};
use crate::partition::Partition;
use crate::quadform::QuadForm;

use super::DistributedProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SlotRole {
    /// A bus of this region that has sharers.
    OwnedBoundary,
    /// A foreign bus this region keeps a copy of.
    ForeignCopy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstraintTag {
    PBalance(usize),
    QBalance(usize),
    VmagLower(usize),
    VmagUpper(usize),
    Flow { branch: usize, end: BranchEnd },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintKind {
    Quad(QuadForm),
    /// `(p² + q²)·inv_s2 − 1`.
    FlowSquared { p: QuadForm, q: QuadForm, inv_s2: f64 },
}

/// One regional constraint `g(x) = 0` or `g(x) ≤ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub tag: ConstraintTag,
    pub kind: ConstraintKind,
}

impl Constraint {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.kind {
            ConstraintKind::Quad(q) => q.eval(x),
            ConstraintKind::FlowSquared { p, q, inv_s2 } => {
                let (pv, qv) = (p.eval(x), q.eval(x));
                (pv * pv + qv * qv) * inv_s2 - 1.0
            }
        }
    }

    /// `grad += weight · ∇g(x)`.
    pub fn add_gradient(&self, x: &[f64], weight: f64, grad: &mut [f64]) {
        match &self.kind {
            ConstraintKind::Quad(q) => q.add_gradient(x, weight, grad),
            ConstraintKind::FlowSquared { p, q, inv_s2 } => {
                let w = 2.0 * inv_s2 * weight;
                p.add_gradient(x, w * p.eval(x), grad);
                q.add_gradient(x, w * q.eval(x), grad);
            }
        }
    }

    /// Largest coefficient magnitude, used for row scaling.
    pub fn magnitude(&self) -> f64 {
        match &self.kind {
            ConstraintKind::Quad(q) => q.max_coef(),
            // gradient size when the limit is reached: 2·|∇p|/s_max
            ConstraintKind::FlowSquared { p, q, inv_s2 } => {
                2.0 * p.max_coef().max(q.max_coef()) * inv_s2.sqrt()
            }
        }
    }
}

/// Variable layout, bounds, cost and constraints of one region.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionBlock {
    region: usize,
    interior: Vec<usize>,
    copies: Vec<usize>,
    slot_of: HashMap<usize, usize>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// `(p_g index, c2, c1, c0)` per generator bus.
    costs: Vec<(usize, f64, f64, f64)>,
    equalities: Vec<Constraint>,
    inequalities: Vec<Constraint>,
    coupled_slots: Vec<(usize, SlotRole)>,
}

impl RegionBlock {
    pub(super) fn build(net: &PowerNetwork, part: &Partition, r: usize) -> Self {
        let interior = part.region(r).to_vec();
        let copies = part.copies(r).to_vec();
        let n_int = interior.len();
        let mut slot_of = HashMap::new();
        for (k, &i) in interior.iter().enumerate() {
            slot_of.insert(i, k);
        }
        for (m, &j) in copies.iter().enumerate() {
            slot_of.insert(j, n_int + m);
        }
        let dim = 4 * n_int + 2 * copies.len();
        let (mut lower, mut upper) = (vec![0.0; dim], vec![0.0; dim]);
        let mut costs = Vec::new();
        for (k, &i) in interior.iter().enumerate() {
            let bus = &net.buses()[i];
            if let Some(g) = net.generator_at(i) {
                (lower[4 * k], upper[4 * k]) = (g.p_min, g.p_max);
                (lower[4 * k + 1], upper[4 * k + 1]) = (g.q_min, g.q_max);
                costs.push((4 * k, g.cost_c2, g.cost_c1, g.cost_c0));
            }
            (lower[4 * k + 2], upper[4 * k + 2]) = (-bus.v_max, bus.v_max);
            if i == net.slack_bus() {
                // fixes the rotational freedom of rectangular voltages
                (lower[4 * k + 3], upper[4 * k + 3]) = (0.0, 0.0);
            } else {
                (lower[4 * k + 3], upper[4 * k + 3]) = (-bus.v_max, bus.v_max);
            }
        }
        for (m, &j) in copies.iter().enumerate() {
            let v = net.buses()[j].v_max;
            let base = 4 * n_int + 2 * m;
            for idx in [base, base + 1] {
                (lower[idx], upper[idx]) = (-v, v);
            }
        }

        let voltage = |j: usize| {
            let s = slot_of[&j];
            if s < n_int {
                (4 * s + 2, 4 * s + 3)
            } else {
                let m = s - n_int;
                (4 * n_int + 2 * m, 4 * n_int + 2 * m + 1)
            }
        };
        let mut equalities = Vec::with_capacity(2 * n_int);
        let mut inequalities = Vec::new();
        for (k, &i) in interior.iter().enumerate() {
            let bus = &net.buses()[i];
            let (mut p, mut q) = injection_forms(net, i, &voltage);
            p.add_lin(4 * k, -1.0);
            p.constant = bus.p_d;
            q.add_lin(4 * k + 1, -1.0);
            q.constant = bus.q_d;
            equalities.push(Constraint {
                tag: ConstraintTag::PBalance(i),
                kind: ConstraintKind::Quad(p),
            });
            equalities.push(Constraint {
                tag: ConstraintTag::QBalance(i),
                kind: ConstraintKind::Quad(q),
            });
            let (e, f) = voltage(i);
            let mut lo = vmag_form(e, f).scaled(-1.0);
            lo.constant = bus.v_min * bus.v_min;
            let mut hi = vmag_form(e, f);
            hi.constant = -bus.v_max * bus.v_max;
            inequalities.push(Constraint {
                tag: ConstraintTag::VmagLower(i),
                kind: ConstraintKind::Quad(lo),
            });
            inequalities.push(Constraint {
                tag: ConstraintTag::VmagUpper(i),
                kind: ConstraintKind::Quad(hi),
            });
        }
        for k in net.active_branches() {
            let br = &net.branches()[k];
            if !br.is_limited() {
                continue;
            }
            for (end, at) in [(BranchEnd::From, br.from), (BranchEnd::To, br.to)] {
                if part.region_of(at) != r {
                    continue;
                }
                let (p, q) = flow_forms(net, k, end, &voltage);
                inequalities.push(Constraint {
                    tag: ConstraintTag::Flow { branch: k, end },
                    kind: ConstraintKind::FlowSquared {
                        p,
                        q,
                        inv_s2: 1.0 / (br.s_max * br.s_max),
                    },
                });
            }
        }

        let mut coupled_slots: Vec<(usize, SlotRole)> = part
            .boundary(r)
            .iter()
            .map(|&j| (j, SlotRole::OwnedBoundary))
            .chain(copies.iter().map(|&j| (j, SlotRole::ForeignCopy)))
            .collect();
        coupled_slots.sort_unstable_by_key(|s| s.0);

        RegionBlock {
            region: r,
            interior,
            copies,
            slot_of,
            lower,
            upper,
            costs,
            equalities,
            inequalities,
            coupled_slots,
        }
    }

    pub fn region(&self) -> usize {
        self.region
    }

    /// `R_r`, ascending bus indices.
    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    /// `δ(R_r)`, ascending bus indices.
    pub fn copies(&self) -> &[usize] {
        &self.copies
    }

    /// `4|R_r| + 2|δ(R_r)|`.
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn equalities(&self) -> &[Constraint] {
        &self.equalities
    }

    pub fn inequalities(&self) -> &[Constraint] {
        &self.inequalities
    }

    pub fn coupled_slots(&self) -> &[(usize, SlotRole)] {
        &self.coupled_slots
    }

    /// Index of `p_g` for an interior bus.
    pub fn pg_index(&self, bus: usize) -> Option<usize> {
        let s = *self.slot_of.get(&bus)?;
        (s < self.interior.len()).then_some(4 * s)
    }

    /// Indices of `(e, f)` for an interior or copied bus.
    pub fn voltage_index(&self, bus: usize) -> Option<(usize, usize)> {
        let s = *self.slot_of.get(&bus)?;
        let n = self.interior.len();
        Some(if s < n {
            (4 * s + 2, 4 * s + 3)
        } else {
            (4 * n + 2 * (s - n), 4 * n + 2 * (s - n) + 1)
        })
    }

    pub fn cost(&self, x: &[f64]) -> f64 {
        self.costs
            .iter()
            .map(|&(k, c2, c1, c0)| (c2 * x[k] + c1) * x[k] + c0)
            .sum()
    }

    /// `grad += ∇c_r(x)`.
    pub fn add_cost_gradient(&self, x: &[f64], grad: &mut [f64]) {
        for &(k, c2, c1, _) in &self.costs {
            grad[k] += 2.0 * c2 * x[k] + c1;
        }
    }

    /// Diagonal of the cost Hessian.
    pub fn cost_curvature(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dim()];
        for &(k, c2, _, _) in &self.costs {
            d[k] = 2.0 * c2;
        }
        d
    }

    /// Largest cost coefficient magnitude.
    pub fn cost_magnitude(&self) -> f64 {
        self.costs
            .iter()
            .map(|&(_, c2, c1, _)| c2.abs().max(c1.abs()))
            .fold(0.0, f64::max)
    }

    /// Smallest and largest cost over the box, both attained at a bound or
    /// at the vertex of each generator's quadratic.
    pub fn cost_range(&self) -> (f64, f64) {
        let (mut lo, mut hi) = (0.0, 0.0);
        for &(k, c2, c1, c0) in &self.costs {
            let (a, b) = (self.lower[k], self.upper[k]);
            let f = |p: f64| (c2 * p + c1) * p + c0;
            let mut vals = vec![f(a), f(b)];
            if c2 != 0.0 {
                let v = -c1 / (2.0 * c2);
                if a < v && v < b {
                    vals.push(f(v));
                }
            }
            lo += vals.iter().cloned().fold(f64::INFINITY, f64::min);
            hi += vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        }
        (lo, hi)
    }

    pub fn project(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }

    pub fn in_box(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.lower)
            .zip(&self.upper)
            .all(|((v, lo), hi)| *lo <= *v && *v <= *hi)
    }

    pub(super) fn from_state(&self, s: &RectState) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.dim());
        for &i in &self.interior {
            x.extend([s.p_g[i], s.q_g[i], s.e[i], s.f[i]]);
        }
        for &j in &self.copies {
            x.extend([s.e[j], s.f[j]]);
        }
        x
    }

    pub(super) fn write_interior(&self, x: &[f64], s: &mut RectState) {
        for (k, &i) in self.interior.iter().enumerate() {
            s.p_g[i] = x[4 * k];
            s.q_g[i] = x[4 * k + 1];
            s.e[i] = x[4 * k + 2];
            s.f[i] = x[4 * k + 3];
        }
    }
}

/// Constraint residuals of region `r` at `x^r`, with the sign conventions of
/// [`NetworkResiduals`]; vectors follow the region's interior bus order and
/// flows cover the limited branch ends at interior buses. Voltages of copied
/// buses come from the copy variables.
pub fn regional_constraint_residuals(
    problem: &DistributedProblem,
    r: usize,
    x: &[f64],
) -> Result<NetworkResiduals> {
    if r >= problem.n_regions() {
        return Err(Error::OutOfRange {
            index: r,
            len: problem.n_regions(),
        });
    }
    let block = problem.block(r);
    if x.len() != block.dim() {
        return Err(Error::Layout {
            expected: block.dim(),
            got: x.len(),
        });
    }
    let net = problem.network();
    let n = net.n_buses();
    let (mut e, mut f) = (vec![0.0; n], vec![0.0; n]);
    for &j in block.interior.iter().chain(&block.copies) {
        let (ie, jf) = block.voltage_index(j).expect("bus in block");
        e[j] = x[ie];
        f[j] = x[jf];
    }
    let m = block.interior.len();
    let mut res = NetworkResiduals {
        p_balance: Vec::with_capacity(m),
        q_balance: Vec::with_capacity(m),
        flow: Vec::new(),
        vmag_lower: Vec::with_capacity(m),
        vmag_upper: Vec::with_capacity(m),
        p_bounds: Vec::with_capacity(m),
        q_bounds: Vec::with_capacity(m),
    };
    for (k, &i) in block.interior.iter().enumerate() {
        let bus = &net.buses()[i];
        let (p, q) = power_injection(net, &e, &f, i)?;
        let (pg, qg) = (x[4 * k], x[4 * k + 1]);
        res.p_balance.push(pg - bus.p_d - p);
        res.q_balance.push(qg - bus.q_d - q);
        let v2 = e[i] * e[i] + f[i] * f[i];
        res.vmag_lower.push(bus.v_min * bus.v_min - v2);
        res.vmag_upper.push(v2 - bus.v_max * bus.v_max);
        let (pl, pu) = (block.lower[4 * k], block.upper[4 * k]);
        let (ql, qu) = (block.lower[4 * k + 1], block.upper[4 * k + 1]);
        res.p_bounds.push((pl - pg).max(pg - pu));
        res.q_bounds.push((ql - qg).max(qg - qu));
    }
    let part = problem.partition();
    for k in net.active_branches() {
        let br = &net.branches()[k];
        if !br.is_limited() {
            continue;
        }
        for (end, at) in [(BranchEnd::From, br.from), (BranchEnd::To, br.to)] {
            if part.region_of(at) == r {
                let (p, q) = line_flow(net, &e, &f, k, end)?;
                res.flow.push((k, end, p * p + q * q - br.s_max * br.s_max));
            }
        }
    }
    Ok(res)
}
