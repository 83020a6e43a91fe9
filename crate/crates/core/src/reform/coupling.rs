use crate::error::{Error, Result};
use crate::netmodel::PowerNetwork;
use crate::partition::Partition;
use crate::sparse::CsrMatrix;

use super::RegionBlock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    E,
    F,
}

/// One scalar consensus equation `x^l_j − x̄_j + z = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CouplingRow {
    pub bus: usize,
    pub region: usize,
    pub component: Component,
    /// Coordinate of `x^l` selected by this row.
    pub local: usize,
    /// Coordinate of `x̄`.
    pub xbar: usize,
}

/// Box `[−v̄, v̄]` per global-copy coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypercube {
    bound: Vec<f64>,
}

impl Hypercube {
    pub fn new(bound: Vec<f64>) -> Self {
        Hypercube { bound }
    }

    pub fn bounds(&self) -> &[f64] {
        &self.bound
    }

    pub fn dim(&self) -> usize {
        self.bound.len()
    }

    pub fn project(&self, v: &mut [f64]) {
        for (x, b) in v.iter_mut().zip(&self.bound) {
            *x = x.clamp(-b, *b);
        }
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        v.iter().zip(&self.bound).all(|(x, b)| x.abs() <= *b)
    }
}

pub fn project_hypercube(candidate: &[f64], cube: &Hypercube) -> Result<Vec<f64>> {
    if candidate.len() != cube.dim() {
        return Err(Error::Layout {
            expected: cube.dim(),
            got: candidate.len(),
        });
    }
    let mut v = candidate.to_vec();
    cube.project(&mut v);
    Ok(v)
}

/// The linear system `Ax + Bx̄ + z = 0`. `A` selects one local coordinate per
/// row and `B` is `−1` on the row's global coordinate, so both are applied as
/// index gathers and scatters.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSystem {
    rows: Vec<CouplingRow>,
    xbar_buses: Vec<usize>,
    /// Rows touching each global coordinate.
    xbar_rows: Vec<Vec<usize>>,
    /// Rows touching each region.
    region_rows: Vec<Vec<usize>>,
    block_offsets: Vec<usize>,
    hypercube: Hypercube,
}

impl CouplingSystem {
    /// Rows are ordered by bus id, then region index, `e` before `f`.
    pub(super) fn build(net: &PowerNetwork, part: &Partition, blocks: &[RegionBlock]) -> Self {
        let mut xbar_buses = part.coupled_buses();
        xbar_buses.sort_by_key(|&j| net.buses()[j].id);
        let mut rows = Vec::new();
        let mut bound = Vec::with_capacity(2 * xbar_buses.len());
        for (k, &j) in xbar_buses.iter().enumerate() {
            let v = net.buses()[j].v_max;
            bound.extend([v, v]);
            let mut regions: Vec<usize> = part.sharers(j).to_vec();
            regions.push(part.region_of(j));
            regions.sort_unstable();
            for l in regions {
                let (e, f) = blocks[l].voltage_index(j).expect("shared bus present in block");
                for (component, local, xbar) in [(Component::E, e, 2 * k), (Component::F, f, 2 * k + 1)] {
                    rows.push(CouplingRow {
                        bus: j,
                        region: l,
                        component,
                        local,
                        xbar,
                    });
                }
            }
        }
        let mut xbar_rows = vec![Vec::new(); bound.len()];
        let mut region_rows = vec![Vec::new(); blocks.len()];
        for (t, row) in rows.iter().enumerate() {
            xbar_rows[row.xbar].push(t);
            region_rows[row.region].push(t);
        }
        let mut block_offsets = Vec::with_capacity(blocks.len() + 1);
        let mut acc = 0;
        for b in blocks {
            block_offsets.push(acc);
            acc += b.dim();
        }
        block_offsets.push(acc);
        CouplingSystem {
            rows,
            xbar_buses,
            xbar_rows,
            region_rows,
            block_offsets,
            hypercube: Hypercube::new(bound),
        }
    }

    pub fn rows(&self) -> &[CouplingRow] {
        &self.rows
    }

    /// `d`.
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_xbar(&self) -> usize {
        self.hypercube.dim()
    }

    /// Buses holding a global copy, in `x̄` order (coordinates `2k`, `2k+1`).
    pub fn xbar_buses(&self) -> &[usize] {
        &self.xbar_buses
    }

    pub fn rows_of_xbar(&self, k: usize) -> &[usize] {
        &self.xbar_rows[k]
    }

    pub fn rows_of_region(&self, r: usize) -> &[usize] {
        &self.region_rows[r]
    }

    pub fn hypercube(&self) -> &Hypercube {
        &self.hypercube
    }

    /// `max_j |N(j)| + 1`, or 0 without coupling.
    pub fn max_copies(&self) -> usize {
        self.xbar_rows.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Total dimension of the stacked `x`.
    pub fn n_x(&self) -> usize {
        *self.block_offsets.last().unwrap_or(&0)
    }

    pub fn a_matrix(&self) -> CsrMatrix {
        let t: Vec<_> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| (i, self.block_offsets[r.region] + r.local, 1.0))
            .collect();
        CsrMatrix::from_triplets(self.n_rows(), self.n_x(), &t)
    }

    pub fn b_matrix(&self) -> CsrMatrix {
        let t: Vec<_> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| (i, r.xbar, -1.0))
            .collect();
        CsrMatrix::from_triplets(self.n_rows(), self.n_xbar(), &t)
    }

    /// `A` and `B` as MatrixMarket text, for inspection.
    pub fn dump_matrix_market(&self) -> (String, String) {
        (self.a_matrix().to_matrix_market(), self.b_matrix().to_matrix_market())
    }

    /// `Ax` (the selected local coordinates).
    pub fn ax(&self, x: &[Vec<f64>]) -> Vec<f64> {
        self.rows.iter().map(|r| x[r.region][r.local]).collect()
    }

    /// `Ax + Bx̄`.
    pub fn consensus_residual(&self, x: &[Vec<f64>], xbar: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| x[r.region][r.local] - xbar[r.xbar])
            .collect()
    }

    /// `Ax + Bx̄ + z`.
    pub fn residual(&self, x: &[Vec<f64>], xbar: &[f64], z: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .zip(z)
            .map(|(r, zi)| x[r.region][r.local] - xbar[r.xbar] + zi)
            .collect()
    }

    /// `Aᵀv` split into region blocks of the given dimensions.
    pub fn at_times(&self, v: &[f64], dims: &[usize]) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = dims.iter().map(|&n| vec![0.0; n]).collect();
        for (r, vi) in self.rows.iter().zip(v) {
            out[r.region][r.local] += vi;
        }
        out
    }

    /// `Bᵀv`.
    pub fn bt_times(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_xbar()];
        for (r, vi) in self.rows.iter().zip(v) {
            out[r.xbar] -= vi;
        }
        out
    }
}
