//! Consensus reformulation of the OPF over a partition.
//!
//! Region `r` owns the variable block
//! `x^r = [(p_g, q_g, e, f) for i in R_r] ++ [(e, f) for j in δ(R_r)]`.
//! Every bus `j` with sharers gets a global copy `x̄_j = (ē_j, f̄_j)`, and
//! every `l ∈ {R(j)} ∪ N(j)` contributes the rows
//! `e^l_j − ē_j + z = 0` and `f^l_j − f̄_j + z = 0` to `Ax + Bx̄ + z = 0`.

mod block;
mod coupling;

use crate::error::{Error, Result};
use crate::netmodel::{PowerNetwork, RectState};
use crate::partition::Partition;

pub use block::{
    regional_constraint_residuals, Constraint, ConstraintKind, ConstraintTag, RegionBlock,
    SlotRole,
};
pub use coupling::{project_hypercube, Component, CouplingRow, CouplingSystem, Hypercube};

/// Region blocks plus the coupling system, together with the network and
/// partition they were built from.
#[derive(Debug, Clone)]
pub struct DistributedProblem {
    net: PowerNetwork,
    partition: Partition,
    blocks: Vec<RegionBlock>,
    coupling: CouplingSystem,
}

pub fn build_distributed(net: &PowerNetwork, partition: &Partition) -> Result<DistributedProblem> {
    if partition.n_buses() != net.n_buses() {
        return Err(Error::Layout {
            expected: net.n_buses(),
            got: partition.n_buses(),
        });
    }
    let blocks: Vec<RegionBlock> = (0..partition.n_regions())
        .map(|r| RegionBlock::build(net, partition, r))
        .collect();
    let coupling = CouplingSystem::build(net, partition, &blocks);
    Ok(DistributedProblem {
        net: net.clone(),
        partition: partition.clone(),
        blocks,
        coupling,
    })
}

impl DistributedProblem {
    pub fn network(&self) -> &PowerNetwork {
        &self.net
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn blocks(&self) -> &[RegionBlock] {
        &self.blocks
    }

    pub fn block(&self, r: usize) -> &RegionBlock {
        &self.blocks[r]
    }

    pub fn coupling(&self) -> &CouplingSystem {
        &self.coupling
    }

    pub fn n_regions(&self) -> usize {
        self.blocks.len()
    }

    /// Number of coupling rows `d`.
    pub fn n_rows(&self) -> usize {
        self.coupling.n_rows()
    }

    fn check_blocks(&self, x: &[Vec<f64>]) -> Result<()> {
        if x.len() != self.blocks.len() {
            return Err(Error::Layout {
                expected: self.blocks.len(),
                got: x.len(),
            });
        }
        for (b, xr) in self.blocks.iter().zip(x) {
            if xr.len() != b.dim() {
                return Err(Error::Layout {
                    expected: b.dim(),
                    got: xr.len(),
                });
            }
        }
        Ok(())
    }

    /// Region blocks holding `state`, with every copy set to the true value.
    pub fn blocks_from_state(&self, state: &RectState) -> Result<Vec<Vec<f64>>> {
        if state.len() != self.net.n_buses() {
            return Err(Error::Layout {
                expected: self.net.n_buses(),
                got: state.len(),
            });
        }
        Ok(self.blocks.iter().map(|b| b.from_state(state)).collect())
    }

    /// Interior variables of every region assembled into one state.
    pub fn stitch(&self, x: &[Vec<f64>]) -> Result<RectState> {
        self.check_blocks(x)?;
        let mut s = RectState::flat(self.net.n_buses());
        for (b, xr) in self.blocks.iter().zip(x) {
            b.write_interior(xr, &mut s);
        }
        Ok(s)
    }

    /// Flat start `(p_g, q_g, e, f) = (0, 0, 1, 0)` projected onto each box.
    pub fn flat_start(&self) -> Vec<Vec<f64>> {
        let state = self.net.flat_start();
        self.blocks
            .iter()
            .map(|b| {
                let mut x = b.from_state(&state);
                b.project(&mut x);
                x
            })
            .collect()
    }

    /// `x̄` taken from each coupled bus's owner, projected onto the hypercube.
    pub fn xbar_from_blocks(&self, x: &[Vec<f64>]) -> Vec<f64> {
        let mut xbar = vec![0.0; self.coupling.n_xbar()];
        for row in self.coupling.rows() {
            if row.region == self.partition.region_of(row.bus) {
                xbar[row.xbar] = x[row.region][row.local];
            }
        }
        self.coupling.hypercube().project(&mut xbar);
        xbar
    }

    /// Total generation cost `Σ_r c_r(x^r)`.
    pub fn cost(&self, x: &[Vec<f64>]) -> f64 {
        self.blocks.iter().zip(x).map(|(b, xr)| b.cost(xr)).sum()
    }
}

#[cfg(test)]
mod tests;
