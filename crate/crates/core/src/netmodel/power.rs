//! Bus injections, branch flows, generation cost, and their derivatives.

use crate::error::{Error, Result};
use crate::quadform::QuadForm;

use super::{BranchEnd, PowerNetwork, RectState};

/// Partial derivatives of a `(p, q)` pair with respect to one bus voltage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BusPartials {
    pub bus: usize,
    pub dp_de: f64,
    pub dp_df: f64,
    pub dq_de: f64,
    pub dq_df: f64,
}

fn check_voltages(net: &PowerNetwork, e: &[f64], f: &[f64]) -> Result<()> {
    let n = net.n_buses();
    for len in [e.len(), f.len()] {
        if len != n {
            return Err(Error::Layout {
                expected: n,
                got: len,
            });
        }
    }
    Ok(())
}

fn check_bus(net: &PowerNetwork, i: usize) -> Result<()> {
    if i >= net.n_buses() {
        return Err(Error::OutOfRange {
            index: i,
            len: net.n_buses(),
        });
    }
    Ok(())
}

/// `(G_ij, B_ij)` over the stored pattern of row `i` (shared by G and B).
fn admittance_row(net: &PowerNetwork, i: usize) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
    net.g().row(i).zip(net.b().row(i)).map(|((j, g), (j2, b))| {
        debug_assert_eq!(j, j2);
        (j, g, b)
    })
}

/// Net real and reactive injection at bus `i`:
/// `p = G_ii|v_i|² + Σ_j G_ij(e_i e_j + f_i f_j) − B_ij(e_i f_j − e_j f_i)` and
/// `q = −B_ii|v_i|² + Σ_j −B_ij(e_i e_j + f_i f_j) − G_ij(e_i f_j − e_j f_i)`.
pub fn power_injection(net: &PowerNetwork, e: &[f64], f: &[f64], i: usize) -> Result<(f64, f64)> {
    check_voltages(net, e, f)?;
    check_bus(net, i)?;
    let (mut p, mut q) = (0.0, 0.0);
    for (j, g, b) in admittance_row(net, i) {
        if j == i {
            let v2 = e[i] * e[i] + f[i] * f[i];
            p += g * v2;
            q -= b * v2;
        } else {
            let a = e[i] * e[j] + f[i] * f[j];
            let s = e[i] * f[j] - e[j] * f[i];
            p += g * a - b * s;
            q += -b * a - g * s;
        }
    }
    Ok((p, q))
}

/// Gradient of [`power_injection`] as one entry per bus in row `i` of Y.
pub fn power_injection_gradient(
    net: &PowerNetwork,
    e: &[f64],
    f: &[f64],
    i: usize,
) -> Result<Vec<BusPartials>> {
    check_voltages(net, e, f)?;
    check_bus(net, i)?;
    let mut own = BusPartials {
        bus: i,
        dp_de: 0.0,
        dp_df: 0.0,
        dq_de: 0.0,
        dq_df: 0.0,
    };
    let mut out = Vec::new();
    for (j, g, b) in admittance_row(net, i) {
        if j == i {
            own.dp_de += 2.0 * g * e[i];
            own.dp_df += 2.0 * g * f[i];
            own.dq_de -= 2.0 * b * e[i];
            own.dq_df -= 2.0 * b * f[i];
        } else {
            own.dp_de += g * e[j] - b * f[j];
            own.dp_df += g * f[j] + b * e[j];
            own.dq_de += -b * e[j] - g * f[j];
            own.dq_df += -b * f[j] + g * e[j];
            out.push(BusPartials {
                bus: j,
                dp_de: g * e[i] + b * f[i],
                dp_df: g * f[i] - b * e[i],
                dq_de: -b * e[i] + g * f[i],
                dq_df: -b * f[i] - g * e[i],
            });
        }
    }
    out.insert(0, own);
    Ok(out)
}

/// `(i, j, g_ii, b_ii, g_ij, b_ij)` seen from the requested end of branch `k`.
fn oriented(net: &PowerNetwork, k: usize, end: BranchEnd) -> (usize, usize, f64, f64, f64, f64) {
    let br = &net.branches()[k];
    let y = net.branch_admittance(k);
    match end {
        BranchEnd::From => (br.from, br.to, y.g_ff, y.b_ff, y.g_ft, y.b_ft),
        BranchEnd::To => (br.to, br.from, y.g_tt, y.b_tt, y.g_tf, y.b_tf),
    }
}

/// Real and reactive flow leaving bus `i` on branch `k` at `end`:
/// `p_ij = g_ii|v_i|² + g_ij(e_i e_j + f_i f_j) − b_ij(e_i f_j − e_j f_i)` and
/// `q_ij = −b_ii|v_i|² − b_ij(e_i e_j + f_i f_j) − g_ij(e_i f_j − e_j f_i)`,
/// where `g_ij + j b_ij` is the branch's transfer admittance. For a branch
/// without taps or charging, `g_ii = −g_ij` and `b_ii = −b_ij`.
pub fn line_flow(
    net: &PowerNetwork,
    e: &[f64],
    f: &[f64],
    k: usize,
    end: BranchEnd,
) -> Result<(f64, f64)> {
    check_voltages(net, e, f)?;
    if k >= net.branches().len() {
        return Err(Error::OutOfRange {
            index: k,
            len: net.branches().len(),
        });
    }
    let (i, j, gii, bii, gij, bij) = oriented(net, k, end);
    let v2 = e[i] * e[i] + f[i] * f[i];
    let a = e[i] * e[j] + f[i] * f[j];
    let s = e[i] * f[j] - e[j] * f[i];
    Ok((gii * v2 + gij * a - bij * s, -bii * v2 - bij * a - gij * s))
}

/// Flow from bus index `from` towards bus index `to` on the first in-service
/// branch joining them.
pub fn line_flow_between(
    net: &PowerNetwork,
    e: &[f64],
    f: &[f64],
    from: usize,
    to: usize,
) -> Result<(f64, f64)> {
    for k in net.active_branches() {
        let br = &net.branches()[k];
        if br.from == from && br.to == to {
            return line_flow(net, e, f, k, BranchEnd::From);
        }
        if br.from == to && br.to == from {
            return line_flow(net, e, f, k, BranchEnd::To);
        }
    }
    Err(Error::BranchNotFound { from, to })
}

/// Gradient of [`line_flow`]: partials at the sending bus, then the receiving bus.
pub fn line_flow_gradient(
    net: &PowerNetwork,
    e: &[f64],
    f: &[f64],
    k: usize,
    end: BranchEnd,
) -> Result<[BusPartials; 2]> {
    check_voltages(net, e, f)?;
    if k >= net.branches().len() {
        return Err(Error::OutOfRange {
            index: k,
            len: net.branches().len(),
        });
    }
    let (i, j, gii, bii, gij, bij) = oriented(net, k, end);
    Ok([
        BusPartials {
            bus: i,
            dp_de: 2.0 * gii * e[i] + gij * e[j] - bij * f[j],
            dp_df: 2.0 * gii * f[i] + gij * f[j] + bij * e[j],
            dq_de: -2.0 * bii * e[i] - bij * e[j] - gij * f[j],
            dq_df: -2.0 * bii * f[i] - bij * f[j] + gij * e[j],
        },
        BusPartials {
            bus: j,
            dp_de: gij * e[i] + bij * f[i],
            dp_df: gij * f[i] - bij * e[i],
            dq_de: -bij * e[i] + gij * f[i],
            dq_df: -bij * f[i] - gij * e[i],
        },
    ])
}

/// Total generation cost for per-bus real generation `p_g`.
pub fn objective(net: &PowerNetwork, p_g: &[f64]) -> f64 {
    net.generators().iter().map(|g| g.cost(p_g[g.bus])).sum()
}

pub fn objective_gradient(net: &PowerNetwork, p_g: &[f64]) -> Vec<f64> {
    let mut grad = vec![0.0; p_g.len()];
    for g in net.generators() {
        grad[g.bus] = g.marginal_cost(p_g[g.bus]);
    }
    grad
}

/// Injection at bus `i` as quadratic forms over an arbitrary variable vector;
/// `voltage(j)` gives the `(e, f)` variable indices standing for bus `j`.
pub fn injection_forms(
    net: &PowerNetwork,
    i: usize,
    voltage: &dyn Fn(usize) -> (usize, usize),
) -> (QuadForm, QuadForm) {
    let (mut p, mut q) = (QuadForm::new(), QuadForm::new());
    let (ei, fi) = voltage(i);
    for (j, g, b) in admittance_row(net, i) {
        if j == i {
            p.add_quad(ei, ei, g);
            p.add_quad(fi, fi, g);
            q.add_quad(ei, ei, -b);
            q.add_quad(fi, fi, -b);
        } else {
            let (ej, fj) = voltage(j);
            p.add_quad(ei, ej, g);
            p.add_quad(fi, fj, g);
            p.add_quad(ei, fj, -b);
            p.add_quad(ej, fi, b);
            q.add_quad(ei, ej, -b);
            q.add_quad(fi, fj, -b);
            q.add_quad(ei, fj, -g);
            q.add_quad(ej, fi, g);
        }
    }
    (p, q)
}

/// Branch flow at `end` of branch `k` as quadratic forms (see [`line_flow`]).
pub fn flow_forms(
    net: &PowerNetwork,
    k: usize,
    end: BranchEnd,
    voltage: &dyn Fn(usize) -> (usize, usize),
) -> (QuadForm, QuadForm) {
    let (i, j, gii, bii, gij, bij) = oriented(net, k, end);
    let (ei, fi) = voltage(i);
    let (ej, fj) = voltage(j);
    let mut p = QuadForm::new();
    p.add_quad(ei, ei, gii);
    p.add_quad(fi, fi, gii);
    p.add_quad(ei, ej, gij);
    p.add_quad(fi, fj, gij);
    p.add_quad(ei, fj, -bij);
    p.add_quad(ej, fi, bij);
    let mut q = QuadForm::new();
    q.add_quad(ei, ei, -bii);
    q.add_quad(fi, fi, -bii);
    q.add_quad(ei, ej, -bij);
    q.add_quad(fi, fj, -bij);
    q.add_quad(ei, fj, -gij);
    q.add_quad(ej, fi, gij);
    (p, q)
}

/// `e² + f²` for the given variable indices.
pub fn vmag_form(e: usize, f: usize) -> QuadForm {
    let mut v = QuadForm::new();
    v.add_quad(e, e, 1.0);
    v.add_quad(f, f, 1.0);
    v
}

/// Constraint residuals of the full OPF at one operating point. Equalities
/// are zero when satisfied; inequalities are `≤ 0` when satisfied.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkResiduals {
    /// `p_g − p_d − p_inj` per bus.
    pub p_balance: Vec<f64>,
    pub q_balance: Vec<f64>,
    /// `(branch, end, p² + q² − s_max²)` for every limited branch end.
    pub flow: Vec<(usize, BranchEnd, f64)>,
    /// `v_min² − (e² + f²)` per bus.
    pub vmag_lower: Vec<f64>,
    /// `(e² + f²) − v_max²` per bus.
    pub vmag_upper: Vec<f64>,
    /// `max(lower − value, value − upper)` for `p_g` and `q_g` per bus.
    pub p_bounds: Vec<f64>,
    pub q_bounds: Vec<f64>,
}

impl NetworkResiduals {
    /// Largest equality magnitude or positive inequality part.
    pub fn max_violation(&self) -> f64 {
        let eq = self
            .p_balance
            .iter()
            .chain(&self.q_balance)
            .map(|v| v.abs());
        let ineq = self
            .flow
            .iter()
            .map(|t| t.2)
            .chain(self.vmag_lower.iter().copied())
            .chain(self.vmag_upper.iter().copied())
            .chain(self.p_bounds.iter().copied())
            .chain(self.q_bounds.iter().copied())
            .map(|v| v.max(0.0));
        eq.chain(ineq).fold(0.0, f64::max)
    }
}

/// Generation bounds at bus `i`; `[0, 0]` at buses without a generator.
pub(crate) fn generation_bounds(net: &PowerNetwork, i: usize) -> ([f64; 2], [f64; 2]) {
    match net.generator_at(i) {
        Some(g) => ([g.p_min, g.p_max], [g.q_min, g.q_max]),
        None => ([0.0, 0.0], [0.0, 0.0]),
    }
}

pub fn full_residuals(net: &PowerNetwork, state: &RectState) -> Result<NetworkResiduals> {
    let n = net.n_buses();
    for len in [state.p_g.len(), state.q_g.len()] {
        if len != n {
            return Err(Error::Layout {
                expected: n,
                got: len,
            });
        }
    }
    let (e, f) = (&state.e, &state.f);
    let mut res = NetworkResiduals {
        p_balance: Vec::with_capacity(n),
        q_balance: Vec::with_capacity(n),
        flow: Vec::new(),
        vmag_lower: Vec::with_capacity(n),
        vmag_upper: Vec::with_capacity(n),
        p_bounds: Vec::with_capacity(n),
        q_bounds: Vec::with_capacity(n),
    };
    for (i, bus) in net.buses().iter().enumerate() {
        let (p, q) = power_injection(net, e, f, i)?;
        res.p_balance.push(state.p_g[i] - bus.p_d - p);
        res.q_balance.push(state.q_g[i] - bus.q_d - q);
        let v2 = e[i] * e[i] + f[i] * f[i];
        res.vmag_lower.push(bus.v_min * bus.v_min - v2);
        res.vmag_upper.push(v2 - bus.v_max * bus.v_max);
        let (pb, qb) = generation_bounds(net, i);
        res.p_bounds.push((pb[0] - state.p_g[i]).max(state.p_g[i] - pb[1]));
        res.q_bounds.push((qb[0] - state.q_g[i]).max(state.q_g[i] - qb[1]));
    }
    for k in net.active_branches() {
        let br = &net.branches()[k];
        if !br.is_limited() {
            continue;
        }
        for end in [BranchEnd::From, BranchEnd::To] {
            let (p, q) = line_flow(net, e, f, k, end)?;
            res.flow.push((k, end, p * p + q * q - br.s_max * br.s_max));
        }
    }
    Ok(res)
}
