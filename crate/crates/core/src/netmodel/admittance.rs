use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

use super::{Branch, Bus};

/// π-model two-port admittances of one branch, split into real and imaginary
/// parts: `Y_ff = g_ff + j b_ff`, `Y_ft = g_ft + j b_ft`, and so on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchAdmittance {
    pub g_ff: f64,
    pub b_ff: f64,
    pub g_ft: f64,
    pub b_ft: f64,
    pub g_tt: f64,
    pub b_tt: f64,
    pub g_tf: f64,
    pub b_tf: f64,
}

impl BranchAdmittance {
    pub fn of(br: &Branch) -> Self {
        let z2 = br.r * br.r + br.x * br.x;
        let (gs, bs) = (br.r / z2, -br.x / z2);
        let t = br.tap;
        let half_b = 0.5 * br.b_charge;
        BranchAdmittance {
            g_ff: gs / (t * t),
            b_ff: (bs + half_b) / (t * t),
            g_ft: -gs / t,
            b_ft: -bs / t,
            g_tt: gs,
            b_tt: bs + half_b,
            g_tf: -gs / t,
            b_tf: -bs / t,
        }
    }
}

/// Assembles `(G, B)` with `Y = G + jB` from in-service branches and bus
/// shunts.
pub fn build_admittance(buses: &[Bus], branches: &[Branch]) -> Result<(CsrMatrix, CsrMatrix)> {
    let n = buses.len();
    let mut gt = Vec::with_capacity(4 * branches.len() + n);
    let mut bt = Vec::with_capacity(4 * branches.len() + n);
    for (i, bus) in buses.iter().enumerate() {
        gt.push((i, i, bus.shunt_gs));
        bt.push((i, i, bus.shunt_bs));
    }
    for br in branches.iter().filter(|b| b.in_service) {
        if br.from >= n || br.to >= n {
            return Err(Error::OutOfRange {
                index: br.from.max(br.to),
                len: n,
            });
        }
        if br.r == 0.0 && br.x == 0.0 {
            return Err(Error::Validation(format!(
                "branch ({}, {}) has zero impedance",
                buses[br.from].id, buses[br.to].id
            )));
        }
        let y = BranchAdmittance::of(br);
        let (f, t) = (br.from, br.to);
        gt.extend([(f, f, y.g_ff), (f, t, y.g_ft), (t, t, y.g_tt), (t, f, y.g_tf)]);
        bt.extend([(f, f, y.b_ff), (f, t, y.b_ft), (t, t, y.b_tt), (t, f, y.b_tf)]);
    }
    Ok((CsrMatrix::from_triplets(n, n, &gt), CsrMatrix::from_triplets(n, n, &bt)))
}
