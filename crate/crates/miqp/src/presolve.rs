//! Projection of free equality-defined columns.
//!
//! A continuous variable that is unbounded, absent from the objective and
//! appears only in equality rows carries no information the solver needs: the
//! rows it touches can be replaced by their combinations that cancel it, and
//! its value recovered afterwards by a minimum-norm least-squares solve. Large
//! data-driven prediction blocks collapse to a handful of dense rows this way,
//! and the singular directions they often carry disappear with them.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::Result;
use crate::model::{Model, Sense, VarId, VarKind};

/// Relative singular-value cut used to decide rank.
pub const RANK_TOL: f64 = 1e-10;

/// Coefficients below this fraction of a derived row's largest entry are dropped.
const DROP_TOL: f64 = 1e-12;

/// A reduced model plus what is needed to map its points back.
#[derive(Clone, Debug)]
pub struct Presolve {
    reduced: Model,
    n_full: usize,
    /// Reduced index to original index.
    keep: Vec<usize>,
    /// Eliminated original indices.
    elim: Vec<usize>,
    /// Per affected row: kept terms (reduced indices) and rhs.
    kept_terms: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
    /// Pseudo-inverse of the eliminated block, `|elim| x |rows|`.
    pinv: DMatrix<f64>,
}

impl Presolve {
    pub fn new(model: &Model) -> Result<Presolve> {
        let n = model.num_vars();
        let mut candidate: Vec<bool> = model
            .vars
            .iter()
            .zip(&model.linear)
            .map(|(v, &c)| v.kind == VarKind::Continuous && v.lb == f64::NEG_INFINITY && v.ub == f64::INFINITY && c == 0.0)
            .collect();
        for (i, j, _) in model.quadratic_terms() {
            candidate[i] = false;
            candidate[j] = false;
        }
        for row in &model.rows {
            if row.sense != Sense::Eq {
                for &(v, _) in &row.terms {
                    candidate[v.0] = false;
                }
            }
        }
        let elim: Vec<usize> = (0..n).filter(|&i| candidate[i]).collect();
        let keep: Vec<usize> = (0..n).filter(|&i| !candidate[i]).collect();
        let mut to_reduced = vec![usize::MAX; n];
        for (k, &i) in keep.iter().enumerate() {
            to_reduced[i] = k;
        }
        let mut to_elim = vec![usize::MAX; n];
        for (k, &i) in elim.iter().enumerate() {
            to_elim[i] = k;
        }

        let mut reduced = Model::new(model.name.clone());
        for &i in &keep {
            let v = &model.vars[i];
            match v.kind {
                VarKind::Binary => {
                    let id = reduced.add_binary(v.name.clone());
                    reduced.set_bounds(id, v.lb, v.ub);
                }
                VarKind::Continuous => {
                    reduced.add_continuous(v.name.clone(), v.lb, v.ub);
                }
            }
        }
        for (k, &i) in keep.iter().enumerate() {
            reduced.set_linear(VarId(k), model.linear[i]);
        }
        for (i, j, v) in model.quadratic_terms() {
            reduced.add_quadratic(VarId(to_reduced[i]), VarId(to_reduced[j]), v);
        }
        reduced.offset = model.offset;

        let mut affected = Vec::new();
        for row in &model.rows {
            if row.terms.iter().any(|&(v, a)| a != 0.0 && candidate[v.0]) {
                affected.push(row);
                continue;
            }
            let terms = row.terms.iter().map(|&(v, a)| (VarId(to_reduced[v.0]), a)).collect();
            reduced.add_row(row.name.clone(), terms, row.sense, row.rhs);
        }

        let (nr, ne) = (affected.len(), elim.len());
        let mut a_e = DMatrix::<f64>::zeros(nr, ne);
        let mut kept_terms = Vec::with_capacity(nr);
        let mut rhs = Vec::with_capacity(nr);
        for (r, row) in affected.iter().enumerate() {
            let mut kt = Vec::new();
            for &(v, a) in &row.terms {
                if candidate[v.0] {
                    a_e[(r, to_elim[v.0])] += a;
                } else {
                    kt.push((to_reduced[v.0], a));
                }
            }
            kept_terms.push(kt);
            rhs.push(row.rhs);
        }

        let mut pinv = DMatrix::<f64>::zeros(ne, nr);
        if nr > 0 {
            // SVD of the transposed block, padded so V covers every row.
            let mut m = DMatrix::<f64>::zeros(ne.max(nr), nr);
            m.view_mut((0, 0), (ne, nr)).copy_from(&a_e.transpose());
            let svd = m.svd(true, true);
            let (u, vt) = (svd.u.as_ref().expect("u requested"), svd.v_t.as_ref().expect("v_t requested"));
            let smax = svd.singular_values.max();
            let cut = RANK_TOL * smax;
            for (l, &s) in svd.singular_values.iter().enumerate() {
                if s > cut && smax > 0.0 {
                    // pinv(A) = sum over l of u_l v_l' / s_l (A' = U S V').
                    let ul = u.view((0, l), (ne, 1));
                    let vl = vt.view((l, 0), (1, nr));
                    pinv += (ul * vl) / s;
                    continue;
                }
                // Left null vector of the eliminated block: a derived row.
                let lam = vt.row(l);
                let mut coef: BTreeMap<usize, f64> = BTreeMap::new();
                let mut b = 0.0f64;
                for r in 0..nr {
                    let w = lam[r];
                    if w == 0.0 {
                        continue;
                    }
                    for &(k, a) in &kept_terms[r] {
                        *coef.entry(k).or_insert(0.0) += w * a;
                    }
                    b += w * rhs[r];
                }
                let big = coef.values().fold(0.0f64, |acc, c| acc.max(c.abs()));
                let scale_b = rhs.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
                if big <= DROP_TOL {
                    if b.abs() > 1e-9 * scale_b {
                        // Inconsistent data: keep an empty row so the solver reports it.
                        reduced.add_row(format!("presolve[{l}]"), Vec::new(), Sense::Eq, b);
                    }
                    continue;
                }
                let terms = coef
                    .into_iter()
                    .filter(|(_, c)| c.abs() > DROP_TOL * big)
                    .map(|(k, c)| (VarId(k), c / big))
                    .collect();
                reduced.add_row(format!("presolve[{l}]"), terms, Sense::Eq, b / big);
            }
        }

        Ok(Presolve { reduced, n_full: n, keep, elim, kept_terms, rhs, pinv })
    }

    pub fn model(&self) -> &Model {
        &self.reduced
    }

    /// Number of variables projected out.
    pub fn eliminated(&self) -> usize {
        self.elim.len()
    }

    /// Column of `v` in the reduced model, if it was kept.
    pub fn reduced_var(&self, v: VarId) -> Option<VarId> {
        self.keep.binary_search(&v.0).ok().map(VarId)
    }

    /// Restricts a full-length point to the reduced variables.
    pub fn restrict(&self, x: &[f64]) -> Vec<f64> {
        self.keep.iter().map(|&i| x[i]).collect()
    }

    /// Lifts a reduced point, filling eliminated variables with the
    /// minimum-norm solution of their rows.
    pub fn expand(&self, xr: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n_full];
        for (k, &i) in self.keep.iter().enumerate() {
            x[i] = xr[k];
        }
        if self.elim.is_empty() {
            return x;
        }
        let resid: nalgebra::DVector<f64> = nalgebra::DVector::from_iterator(
            self.rhs.len(),
            self.kept_terms
                .iter()
                .zip(&self.rhs)
                .map(|(terms, b)| b - terms.iter().map(|&(k, a)| a * xr[k]).sum::<f64>()),
        );
        let xe = &self.pinv * resid;
        for (k, &i) in self.elim.iter().enumerate() {
            x[i] = xe[k];
        }
        x
    }
}
