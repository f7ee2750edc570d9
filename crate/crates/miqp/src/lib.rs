//! A small mixed-integer quadratic programming layer.
//!
//! Models are built with [`Model`], solved to proven optimality (within a
//! relative gap) with [`solve_bb`], or exhaustively with [`solve_enumerate`]
//! for verification. Continuous relaxations are delegated to an
//! interior-point QP backend, see [`solve_relaxation`].

mod bb;
mod enumerate;
mod error;
mod model;
pub mod mps;
mod presolve;
mod relax;

pub use bb::{solve_bb, solve_bb_with_start, solve_bb_with_starts, Branching, NodeSelection, SolveStats, SolverConfig};
pub use enumerate::{solve_enumerate, ENUMERATION_CAP};
pub use error::{Error, Result};
pub use model::{Constraint, Model, RowId, Sense, VarId, VarKind, Variable};
pub use presolve::Presolve;
pub use relax::{solve_relaxation, RelaxStatus, Relaxation};

use serde::{Deserialize, Serialize};

/// Termination status of a mixed-integer solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Optimal,
    Infeasible,
    GapLimit,
    NodeLimit,
    TimeLimit,
}

/// Result of a mixed-integer solve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Solution {
    /// Variable values, indexed by [`VarId`]; empty when no incumbent exists.
    pub values: Vec<f64>,
    pub objective: f64,
    pub status: Status,
    /// Relative gap `(ub - lb) / max(|ub|, 1)` at termination.
    pub gap: f64,
    pub best_bound: f64,
    pub nodes: u64,
    pub stats: SolveStats,
}

impl Solution {
    pub fn value(&self, v: VarId) -> f64 {
        self.values[v.0]
    }

    pub fn is_feasible(&self) -> bool {
        !self.values.is_empty()
    }
}
