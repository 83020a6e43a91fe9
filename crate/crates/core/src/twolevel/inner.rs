//! Region agents and the three-phase inner iteration.
//!
//! Agents own their block, their coupling rows and the global copies of
//! their own boundary buses. Within an iteration agents only see an
//! immutable snapshot of `x̄`; everything else they learn arrives as a
//! message routed by the coordinator.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nlp::{solve_subproblem, Multipliers, NlpStatus, SlotPenalty, SubproblemSpec, Tolerances};
use crate::reform::{DistributedProblem, RegionBlock};

use super::updates::{norm2, update_dual_row, update_slack_row, update_xbar_row, XbarInput};

/// Whether the slack block takes part (three-block) or is pinned at zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SlackMode {
    Free,
    Zero,
}

/// Full row-indexed view of the inner iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerState {
    pub x: Vec<Vec<f64>>,
    pub xbar: Vec<f64>,
    pub z: Vec<f64>,
    pub y: Vec<f64>,
    pub lambda: Vec<f64>,
    /// `β_i` used in the latest slack update.
    pub beta: Vec<f64>,
    /// `ρ_i` used in the latest iteration.
    pub rho: Vec<f64>,
    pub t: usize,
    /// `(x̄, z)` from the iteration before the latest one.
    pub previous: Option<(Vec<f64>, Vec<f64>)>,
}

/// Contribution of one copy row to its global copy, sent to the bus owner.
#[derive(Debug, Clone, Copy)]
struct CopyMessage {
    row: usize,
    xbar: usize,
    input: XbarInput,
}

struct Agent<'a> {
    block: &'a RegionBlock,
    /// Global ids of this region's coupling rows, ascending.
    rows: Vec<usize>,
    local: Vec<usize>,
    xbar_of: Vec<usize>,
    /// Global-copy coordinates of buses this region owns.
    owned: Vec<usize>,
    x: Vec<f64>,
    multipliers: Option<Multipliers>,
    z: Vec<f64>,
    y: Vec<f64>,
    lambda: Vec<f64>,
    beta: Vec<f64>,
    rho: Vec<f64>,
    /// `β_i` behind the current `z_i`, for the residual identity.
    beta_at_z: Vec<f64>,
    /// `ρ_i` of the latest dual step.
    rho_at_y: Vec<f64>,
    status: Option<NlpStatus>,
}

/// Per-row outcome of phase 3.
#[derive(Debug, Clone, Copy)]
struct RowUpdate {
    row: usize,
    residual: f64,
    consensus: f64,
    z_old: f64,
    z: f64,
    dual_identity: f64,
    residual_identity: f64,
}

impl Agent<'_> {
    fn solve(&mut self, xbar: &[f64], tol: &Tolerances) -> Result<()> {
        let slots = (0..self.rows.len())
            .map(|k| SlotPenalty {
                local: self.local[k],
                y: self.y[k],
                rho: self.rho[k],
                target: xbar[self.xbar_of[k]] - self.z[k],
            })
            .collect();
        let spec = SubproblemSpec {
            block: self.block,
            slots,
            warm_start: self.x.clone(),
            multipliers: self.multipliers.take(),
        };
        let out = solve_subproblem(&spec, tol)
            .map_err(|e| Error::Solver(format!("region {}: {e}", self.block.region())))?;
        self.x = out.x;
        self.multipliers = Some(out.multipliers);
        self.status = Some(out.status);
        Ok(())
    }

    fn outbox(&self, owner_of: &[usize]) -> Vec<(usize, CopyMessage)> {
        (0..self.rows.len())
            .map(|k| {
                let msg = CopyMessage {
                    row: self.rows[k],
                    xbar: self.xbar_of[k],
                    input: XbarInput {
                        y: self.y[k],
                        x: self.x[self.local[k]],
                        z: self.z[k],
                        rho: self.rho[k],
                    },
                };
                (owner_of[msg.xbar], msg)
            })
            .collect()
    }

    /// Global copies of the owned buses from the received messages.
    fn update_owned(&self, inbox: &[CopyMessage], bounds: &[f64]) -> Result<Vec<(usize, f64)>> {
        let mut out = Vec::with_capacity(self.owned.len());
        for &k in &self.owned {
            let inputs: Vec<XbarInput> = inbox.iter().filter(|m| m.xbar == k).map(|m| m.input).collect();
            out.push((k, update_xbar_row(&inputs, bounds[k])?));
        }
        Ok(out)
    }

    fn update_rows(&mut self, xbar: &[f64], mode: SlackMode) -> Vec<RowUpdate> {
        let mut out = Vec::with_capacity(self.rows.len());
        for k in 0..self.rows.len() {
            let (x, xb) = (self.x[self.local[k]], xbar[self.xbar_of[k]]);
            let z_old = self.z[k];
            let (lambda, beta, rho) = (self.lambda[k], self.beta[k], self.rho[k]);
            let z = match mode {
                SlackMode::Free => update_slack_row(lambda, self.y[k], rho, beta, x, xb),
                SlackMode::Zero => 0.0,
            };
            let residual = x - xb + z;
            let y = update_dual_row(self.y[k], rho, residual);
            let (dual_identity, residual_identity) = match mode {
                SlackMode::Free => {
                    // rounding scales with the largest term entering y
                    let terms = [1.0, lambda.abs(), (beta * z).abs(), y.abs(), self.y[k].abs(), (rho * (x - xb)).abs()];
                    let dual = (lambda + beta * z + y).abs() / terms.iter().fold(0.0f64, |m, v| m.max(*v));
                    let predicted = (self.beta_at_z[k] * z_old - beta * z) / rho;
                    (dual, (residual - predicted).abs())
                }
                SlackMode::Zero => (0.0, 0.0),
            };
            self.z[k] = z;
            self.y[k] = y;
            self.beta_at_z[k] = beta;
            self.rho_at_y[k] = rho;
            out.push(RowUpdate {
                row: self.rows[k],
                residual,
                consensus: x - xb,
                z_old,
                z,
                dual_identity,
                residual_identity,
            });
        }
        out
    }
}

/// Row-indexed results of one inner iteration.
#[derive(Debug, Clone)]
pub(crate) struct StepReport {
    pub residual: Vec<f64>,
    pub consensus: Vec<f64>,
    pub z: Vec<f64>,
    pub z_prev: Vec<f64>,
    pub objective: f64,
    pub kept_previous: usize,
    pub stationary: usize,
    pub dual_identity: f64,
    pub residual_identity: f64,
}

impl StepReport {
    pub fn slack_change(&self) -> f64 {
        let d: Vec<f64> = self.z.iter().zip(&self.z_prev).map(|(a, b)| a - b).collect();
        norm2(&d)
    }
}

/// Coordinator holding the agents of one problem.
pub(crate) struct Engine<'a> {
    problem: &'a DistributedProblem,
    agents: Vec<Agent<'a>>,
    xbar: Vec<f64>,
    owner_of: Vec<usize>,
    tol: Tolerances,
    pool: Option<rayon::ThreadPool>,
    mode: SlackMode,
    t: usize,
    previous: Option<(Vec<f64>, Vec<f64>)>,
}

impl<'a> Engine<'a> {
    /// `threads == 0` runs every phase on the calling thread.
    pub fn new(
        problem: &'a DistributedProblem,
        x: Vec<Vec<f64>>,
        xbar: Vec<f64>,
        tol: Tolerances,
        threads: usize,
        mode: SlackMode,
    ) -> Result<Self> {
        let coupling = problem.coupling();
        if x.len() != problem.n_regions() {
            return Err(Error::Layout {
                expected: problem.n_regions(),
                got: x.len(),
            });
        }
        if xbar.len() != coupling.n_xbar() {
            return Err(Error::Layout {
                expected: coupling.n_xbar(),
                got: xbar.len(),
            });
        }
        let part = problem.partition();
        let owner_of: Vec<usize> = (0..coupling.n_xbar())
            .map(|k| part.region_of(coupling.xbar_buses()[k / 2]))
            .collect();
        let mut agents = Vec::with_capacity(problem.n_regions());
        for (r, xr) in x.into_iter().enumerate() {
            let block = problem.block(r);
            if xr.len() != block.dim() {
                return Err(Error::Layout {
                    expected: block.dim(),
                    got: xr.len(),
                });
            }
            let rows = coupling.rows_of_region(r).to_vec();
            let n = rows.len();
            agents.push(Agent {
                block,
                local: rows.iter().map(|&i| coupling.rows()[i].local).collect(),
                xbar_of: rows.iter().map(|&i| coupling.rows()[i].xbar).collect(),
                owned: (0..coupling.n_xbar()).filter(|&k| owner_of[k] == r).collect(),
                rows,
                x: xr,
                multipliers: None,
                z: vec![0.0; n],
                y: vec![0.0; n],
                lambda: vec![0.0; n],
                beta: vec![0.0; n],
                rho: vec![0.0; n],
                beta_at_z: vec![0.0; n],
                rho_at_y: vec![0.0; n],
                status: None,
            });
        }
        let pool = if threads > 0 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .map_err(|e| Error::Solver(format!("thread pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Engine {
            problem,
            agents,
            xbar,
            owner_of,
            tol,
            pool,
            mode,
            t: 0,
            previous: None,
        })
    }

    fn n_rows(&self) -> usize {
        self.problem.coupling().n_rows()
    }

    fn scatter(&mut self, v: &[f64], field: for<'b> fn(&'b mut Agent<'a>) -> &'b mut Vec<f64>) {
        for a in &mut self.agents {
            let rows = a.rows.clone();
            let dst = field(a);
            for (k, &i) in rows.iter().enumerate() {
                dst[k] = v[i];
            }
        }
    }

    fn gather(&self, field: for<'b> fn(&'b Agent<'a>) -> &'b Vec<f64>) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows()];
        for a in &self.agents {
            for (k, &i) in a.rows.iter().enumerate() {
                out[i] = field(a)[k];
            }
        }
        out
    }

    /// Starts an inner run: `z = 0`, `y = −λ`, and the given penalties.
    pub fn restart(&mut self, lambda: &[f64], beta: &[f64], rho: &[f64]) {
        let zeros = vec![0.0; self.n_rows()];
        let neg: Vec<f64> = lambda.iter().map(|v| -v).collect();
        self.scatter(lambda, |a| &mut a.lambda);
        self.scatter(beta, |a| &mut a.beta);
        self.scatter(beta, |a| &mut a.beta_at_z);
        self.scatter(rho, |a| &mut a.rho);
        self.scatter(rho, |a| &mut a.rho_at_y);
        self.scatter(&zeros, |a| &mut a.z);
        self.scatter(&neg, |a| &mut a.y);
        self.t = 0;
        self.previous = None;
    }

    /// Sets the dual variables directly (two-block runs start from any `y`).
    pub fn set_duals(&mut self, y: &[f64]) {
        self.scatter(y, |a| &mut a.y);
    }

    pub fn set_penalties(&mut self, beta: &[f64], rho: &[f64]) {
        self.scatter(beta, |a| &mut a.beta);
        self.scatter(rho, |a| &mut a.rho);
    }

    /// One iteration: regional solves, global-copy update, slack and dual
    /// update.
    pub fn step(&mut self) -> Result<StepReport> {
        let xbar_before = self.xbar.clone();

        // phase 1: concurrent regional solves on the x̄ snapshot
        let snapshot = &self.xbar;
        let tol = &self.tol;
        let results: Vec<Result<()>> = match &self.pool {
            Some(pool) => pool.install(|| self.agents.par_iter_mut().map(|a| a.solve(snapshot, tol)).collect()),
            None => self.agents.iter_mut().map(|a| a.solve(snapshot, tol)).collect(),
        };
        results.into_iter().collect::<Result<Vec<()>>>()?;

        // phase 2: copies to owners, owners update, broadcast
        let mut inbox: Vec<Vec<CopyMessage>> = vec![Vec::new(); self.agents.len()];
        for a in &self.agents {
            for (owner, msg) in a.outbox(&self.owner_of) {
                inbox[owner].push(msg);
            }
        }
        inbox.iter_mut().for_each(|m| m.sort_by_key(|msg| msg.row));
        let bounds = self.problem.coupling().hypercube().bounds();
        let mut next = self.xbar.clone();
        for (a, msgs) in self.agents.iter().zip(&inbox) {
            for (k, v) in a.update_owned(msgs, bounds)? {
                next[k] = v;
            }
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "global copy",
                point: next,
            });
        }
        self.xbar = next;

        // phase 3: slack and dual rows, reduced by the coordinator
        let n = self.n_rows();
        let mut report = StepReport {
            residual: vec![0.0; n],
            consensus: vec![0.0; n],
            z: vec![0.0; n],
            z_prev: vec![0.0; n],
            objective: 0.0,
            kept_previous: 0,
            stationary: 0,
            dual_identity: 0.0,
            residual_identity: 0.0,
        };
        let (xbar, mode) = (&self.xbar, self.mode);
        for a in &mut self.agents {
            for u in a.update_rows(xbar, mode) {
                report.residual[u.row] = u.residual;
                report.consensus[u.row] = u.consensus;
                report.z[u.row] = u.z;
                report.z_prev[u.row] = u.z_old;
                report.dual_identity = report.dual_identity.max(u.dual_identity);
                report.residual_identity = report.residual_identity.max(u.residual_identity);
            }
            report.objective += a.block.cost(&a.x);
            match a.status {
                Some(NlpStatus::KeptPrevious) => report.kept_previous += 1,
                Some(NlpStatus::ImprovedStationary) => report.stationary += 1,
                _ => {}
            }
        }
        if report.residual.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "coupling residual",
                point: report.residual,
            });
        }
        debug_assert!(
            report.dual_identity <= 1e-10,
            "dual identity violated by {}",
            report.dual_identity
        );
        self.previous = Some((xbar_before, report.z_prev.clone()));
        self.t += 1;
        Ok(report)
    }

    pub fn state(&self) -> InnerState {
        InnerState {
            x: self.agents.iter().map(|a| a.x.clone()).collect(),
            xbar: self.xbar.clone(),
            z: self.gather(|a| &a.z),
            y: self.gather(|a| &a.y),
            lambda: self.gather(|a| &a.lambda),
            beta: self.gather(|a| &a.beta_at_z),
            rho: self.gather(|a| &a.rho_at_y),
            t: self.t,
            previous: self.previous.clone(),
        }
    }

    pub fn z(&self) -> Vec<f64> {
        self.gather(|a| &a.z)
    }

    /// `Ax + Bx̄ + z` at the current iterate.
    pub fn residual(&self) -> Vec<f64> {
        let x: Vec<Vec<f64>> = self.agents.iter().map(|a| a.x.clone()).collect();
        self.problem.coupling().residual(&x, &self.xbar, &self.z())
    }
}
