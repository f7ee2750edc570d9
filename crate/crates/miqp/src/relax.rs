//! Continuous QP relaxation, backed by the Clarabel interior-point solver.
//!
//! Variables whose bounds coincide are substituted out as constants before the
//! problem reaches the backend, so branching on a binary shrinks the QP.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, SolverStatus,
    SupportedConeT, ZeroConeT,
};

use crate::error::{Error, Result};
use crate::model::{Model, Sense};
use crate::presolve::Presolve;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RelaxStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Backend stopped without a certificate either way.
    Numerical,
}

#[derive(Clone, Debug)]
pub struct Relaxation {
    pub status: RelaxStatus,
    /// Full-length primal point (fixed variables included).
    pub x: Vec<f64>,
    /// Model objective evaluated at `x`.
    pub objective: f64,
    pub iterations: u32,
    /// Backend termination status, for diagnostics.
    pub backend_status: String,
}

/// Tolerances handed to the backend.
#[derive(Clone, Copy, Debug)]
pub struct RelaxTolerances {
    pub feas: f64,
    pub gap: f64,
    pub max_iter: u32,
}

impl Default for RelaxTolerances {
    fn default() -> Self {
        RelaxTolerances { feas: 1e-9, gap: 1e-9, max_iter: 200 }
    }
}

/// Solves the relaxation of `model` with the original bounds.
pub fn solve_relaxation(model: &Model) -> Result<Relaxation> {
    let pre = Presolve::new(model)?;
    let red = pre.model();
    let lb: Vec<f64> = red.vars.iter().map(|v| v.lb).collect();
    let ub: Vec<f64> = red.vars.iter().map(|v| v.ub).collect();
    let mut r = solve_with_bounds(red, &lb, &ub, RelaxTolerances::default())?;
    r.x = pre.expand(&r.x);
    if r.objective.is_finite() {
        r.objective = model.objective(&r.x);
    }
    Ok(r)
}

/// Solves the relaxation of `model` with bounds overridden by `lb`/`ub`.
pub(crate) fn solve_with_bounds(
    model: &Model,
    lb: &[f64],
    ub: &[f64],
    tol: RelaxTolerances,
) -> Result<Relaxation> {
    let n = model.num_vars();
    if lb.iter().zip(ub).any(|(l, u)| l > u) {
        return Ok(infeasible(n, lb));
    }

    // Map free variables to compact column indices.
    let mut col = vec![usize::MAX; n];
    let mut free = Vec::new();
    let mut x = vec![0.0; n];
    for i in 0..n {
        if lb[i] == ub[i] {
            x[i] = lb[i];
        } else {
            col[i] = free.len();
            free.push(i);
        }
    }
    let nf = free.len();

    // Linear term, folding in quadratic cross terms with fixed variables.
    let mut q: Vec<f64> = free.iter().map(|&i| model.linear[i]).collect();
    let mut p_trip: Vec<(usize, usize, f64)> = Vec::new();
    for (i, j, v) in model.quadratic_terms() {
        match (col[i] != usize::MAX, col[j] != usize::MAX) {
            (true, true) => p_trip.push((col[i], col[j], v)),
            (true, false) => q[col[i]] += v * x[j],
            (false, true) => q[col[j]] += v * x[i],
            (false, false) => {}
        }
    }

    // Constraint rows: equalities first (zero cone), then inequalities.
    let mut eq_rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    let mut le_rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    for row in &model.rows {
        let mut terms = Vec::with_capacity(row.terms.len());
        let mut rhs = row.rhs;
        for &(v, a) in &row.terms {
            if a == 0.0 {
                continue;
            }
            if col[v.0] == usize::MAX {
                rhs -= a * x[v.0];
            } else {
                terms.push((col[v.0], a));
            }
        }
        if terms.is_empty() {
            let ok = match row.sense {
                Sense::Le => rhs >= -tol.feas,
                Sense::Ge => rhs <= tol.feas,
                Sense::Eq => rhs.abs() <= tol.feas,
            };
            if !ok {
                return Ok(infeasible(n, &x));
            }
            continue;
        }
        match row.sense {
            Sense::Le => le_rows.push((terms, rhs)),
            Sense::Ge => le_rows.push((terms.into_iter().map(|(c, a)| (c, -a)).collect(), -rhs)),
            Sense::Eq => eq_rows.push((terms, rhs)),
        }
    }
    for (k, &i) in free.iter().enumerate() {
        if ub[i].is_finite() {
            le_rows.push((vec![(k, 1.0)], ub[i]));
        }
        if lb[i].is_finite() {
            le_rows.push((vec![(k, -1.0)], -lb[i]));
        }
    }

    if nf == 0 {
        let objective = model.objective(&x);
        return Ok(Relaxation { status: RelaxStatus::Optimal, x, objective, iterations: 0, backend_status: "Trivial".into() });
    }

    let n_eq = eq_rows.len();
    let n_le = le_rows.len();
    let mut a_trip = Vec::new();
    let mut b = Vec::with_capacity(n_eq + n_le);
    for (r, (terms, rhs)) in eq_rows.iter().chain(le_rows.iter()).enumerate() {
        for &(c, a) in terms {
            a_trip.push((r, c, a));
        }
        b.push(*rhs);
    }
    let a_mat = csc(n_eq + n_le, nf, a_trip);
    let p_mat = csc(nf, nf, p_trip);
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    if n_eq > 0 {
        cones.push(ZeroConeT(n_eq));
    }
    if n_le > 0 {
        cones.push(NonnegativeConeT(n_le));
    }

    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .tol_feas(tol.feas)
        .tol_gap_abs(tol.gap)
        .tol_gap_rel(tol.gap)
        .max_iter(tol.max_iter)
        .build()
        .map_err(|e| Error::Backend(format!("{e:?}")))?;
    let mut solver = DefaultSolver::new(&p_mat, &q, &a_mat, &b, &cones, settings)
        .map_err(|e| Error::Backend(format!("{e:?}")))?;
    solver.solve();
    let sol = &solver.solution;

    let status = match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => RelaxStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => RelaxStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => RelaxStatus::Unbounded,
        _ => RelaxStatus::Numerical,
    };
    if status == RelaxStatus::Optimal || status == RelaxStatus::Numerical {
        for (k, &i) in free.iter().enumerate() {
            // The interior point lands a hair outside the box at times.
            x[i] = sol.x[k].clamp(lb[i], ub[i]);
        }
    }
    let objective = match status {
        RelaxStatus::Infeasible => f64::INFINITY,
        RelaxStatus::Unbounded => f64::NEG_INFINITY,
        _ => model.objective(&x),
    };
    Ok(Relaxation { status, x, objective, iterations: sol.iterations, backend_status: format!("{:?}", sol.status) })
}

fn infeasible(n: usize, x: &[f64]) -> Relaxation {
    Relaxation {
        status: RelaxStatus::Infeasible,
        x: x[..n].to_vec(),
        objective: f64::INFINITY,
        iterations: 0,
        backend_status: "Presolved".into(),
    }
}

/// Builds a CSC matrix from triplets, summing duplicates.
fn csc(m: usize, n: usize, mut trip: Vec<(usize, usize, f64)>) -> CscMatrix<f64> {
    trip.sort_unstable_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
    let mut colptr = vec![0usize; n + 1];
    let mut rowval = Vec::with_capacity(trip.len());
    let mut nzval: Vec<f64> = Vec::with_capacity(trip.len());
    let mut last: Option<(usize, usize)> = None;
    for (r, c, v) in trip {
        if last == Some((r, c)) {
            *nzval.last_mut().unwrap() += v;
            continue;
        }
        rowval.push(r);
        nzval.push(v);
        colptr[c + 1] += 1;
        last = Some((r, c));
    }
    for c in 0..n {
        colptr[c + 1] += colptr[c];
    }
    CscMatrix::new(m, n, colptr, rowval, nzval)
}
