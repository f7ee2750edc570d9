//! Exhaustive reference solver: one continuous QP per binary assignment.

use crate::bb::SolveStats;
use crate::error::{Error, Result};
use crate::model::{Model, VarKind};
use crate::presolve::Presolve;
use crate::relax::{solve_with_bounds, RelaxStatus, RelaxTolerances};
use crate::{Solution, Status};

/// Largest number of free binaries [`solve_enumerate`] accepts.
pub const ENUMERATION_CAP: usize = 20;

/// Solves `model` by trying every assignment of its binaries. Assignments
/// that violate a row made purely of fixed variables are rejected without a
/// QP solve. Ties keep the lexicographically first assignment.
pub fn solve_enumerate(full: &Model, feas_tol: f64) -> Result<Solution> {
    full.validate()?;
    let pre = Presolve::new(full)?;
    let model = pre.model();
    // Binaries fixed by their bounds are not enumerated.
    let bins: Vec<usize> = (0..model.num_vars())
        .filter(|&i| model.vars[i].kind == VarKind::Binary && model.vars[i].lb < model.vars[i].ub)
        .collect();
    if bins.len() > ENUMERATION_CAP {
        return Err(Error::EnumerationCap { binaries: bins.len(), cap: ENUMERATION_CAP });
    }
    let mut lb: Vec<f64> = model.vars.iter().map(|v| v.lb).collect();
    let mut ub: Vec<f64> = model.vars.iter().map(|v| v.ub).collect();
    let mut stats = SolveStats::default();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let total = 1u64 << bins.len();
    for mask in 0..total {
        for (k, &i) in bins.iter().enumerate() {
            let v = ((mask >> k) & 1) as f64;
            lb[i] = v;
            ub[i] = v;
        }
        let r = solve_with_bounds(model, &lb, &ub, RelaxTolerances::default())?;
        if r.iterations > 0 {
            stats.relaxations += 1;
            stats.backend_iterations += r.iterations as u64;
        }
        match r.status {
            RelaxStatus::Infeasible => {
                stats.pruned_infeasible += 1;
                continue;
            }
            RelaxStatus::Unbounded => return Err(Error::Unbounded),
            RelaxStatus::Numerical => stats.numerical_failures += 1,
            RelaxStatus::Optimal => {}
        }
        let x = pre.expand(&r.x);
        if full.max_violation(&x) > feas_tol {
            continue;
        }
        let objective = full.objective(&x);
        if best.as_ref().is_none_or(|(f, _)| objective < *f) {
            best = Some((objective, x));
            stats.incumbent_updates += 1;
        }
    }
    Ok(match best {
        Some((objective, values)) => Solution {
            values,
            objective,
            status: Status::Optimal,
            gap: 0.0,
            best_bound: objective,
            nodes: total,
            stats,
        },
        None => Solution {
            values: Vec::new(),
            objective: f64::INFINITY,
            status: Status::Infeasible,
            gap: f64::INFINITY,
            best_bound: f64::INFINITY,
            nodes: total,
            stats,
        },
    })
}
