use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RowId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lb: f64,
    pub ub: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

/// A linear row `sum(coef * x) <sense> rhs`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, a)| a * x[v.0]).sum()
    }

    /// Amount by which `x` violates the row (zero when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let act = self.activity(x);
        match self.sense {
            Sense::Le => (act - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - act).max(0.0),
            Sense::Eq => (act - self.rhs).abs(),
        }
    }
}

/// Minimize `0.5 x'Qx + c'x + offset` subject to linear rows and bounds,
/// with some variables restricted to {0, 1}.
///
/// `Q` is stored as its upper triangle: an entry `(i, j, v)` with `i <= j`
/// stands for `Q[i][j] = Q[j][i] = v`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Model {
    pub name: String,
    pub vars: Vec<Variable>,
    pub rows: Vec<Constraint>,
    pub linear: Vec<f64>,
    quad: BTreeMap<(usize, usize), f64>,
    pub offset: f64,
}

impl Model {
    pub fn new(name: impl Into<String>) -> Self {
        Model { name: name.into(), ..Default::default() }
    }

    pub fn add_continuous(&mut self, name: impl Into<String>, lb: f64, ub: f64) -> VarId {
        self.push_var(name.into(), VarKind::Continuous, lb, ub)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        self.push_var(name.into(), VarKind::Binary, 0.0, 1.0)
    }

    fn push_var(&mut self, name: String, kind: VarKind, lb: f64, ub: f64) -> VarId {
        self.vars.push(Variable { name, kind, lb, ub });
        self.linear.push(0.0);
        VarId(self.vars.len() - 1)
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn binaries(&self) -> Vec<VarId> {
        (0..self.vars.len())
            .filter(|&i| self.vars[i].kind == VarKind::Binary)
            .map(VarId)
            .collect()
    }

    pub fn num_binaries(&self) -> usize {
        self.vars.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    pub fn var(&self, v: VarId) -> &Variable {
        &self.vars[v.0]
    }

    pub fn set_bounds(&mut self, v: VarId, lb: f64, ub: f64) {
        self.vars[v.0].lb = lb;
        self.vars[v.0].ub = ub;
    }

    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        terms: Vec<(VarId, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> RowId {
        self.rows.push(Constraint { name: name.into(), terms, sense, rhs });
        RowId(self.rows.len() - 1)
    }

    pub fn row(&self, r: RowId) -> &Constraint {
        &self.rows[r.0]
    }

    pub fn set_linear(&mut self, v: VarId, c: f64) {
        self.linear[v.0] = c;
    }

    pub fn add_linear(&mut self, v: VarId, c: f64) {
        self.linear[v.0] += c;
    }

    /// Adds `v` to the symmetric entry `Q[i][j]` (and `Q[j][i]`).
    pub fn add_quadratic(&mut self, i: VarId, j: VarId, v: f64) {
        let key = if i.0 <= j.0 { (i.0, j.0) } else { (j.0, i.0) };
        *self.quad.entry(key).or_insert(0.0) += v;
    }

    /// Upper-triangle entries of `Q`, sorted by (row, col).
    pub fn quadratic_terms(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.quad.iter().filter(|(_, &v)| v != 0.0).map(|(&(i, j), &v)| (i, j, v))
    }

    pub fn has_quadratic(&self) -> bool {
        self.quadratic_terms().next().is_some()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut f = self.offset;
        for (c, xi) in self.linear.iter().zip(x) {
            f += c * xi;
        }
        for (i, j, v) in self.quadratic_terms() {
            if i == j {
                f += 0.5 * v * x[i] * x[i];
            } else {
                f += v * x[i] * x[j];
            }
        }
        f
    }

    /// Largest row or bound violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.rows.iter().map(|r| r.violation(x)).fold(0.0, f64::max);
        let bounds = self
            .vars
            .iter()
            .zip(x)
            .map(|(v, &xi)| (v.lb - xi).max(xi - v.ub).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    /// Largest distance of a binary variable from {0, 1}.
    pub fn max_integrality_violation(&self, x: &[f64]) -> f64 {
        self.binaries()
            .into_iter()
            .map(|v| {
                let xi = x[v.0];
                xi.min(1.0 - xi).abs().min((xi - xi.round()).abs())
            })
            .fold(0.0, f64::max)
    }

    /// Appends the linearization of `z = AND(factors)`: `z <= f` for every
    /// factor and `z >= sum(f) - (k - 1)`.
    pub fn add_and(&mut self, z: VarId, factors: &[VarId]) -> Result<Vec<RowId>> {
        for &v in std::iter::once(&z).chain(factors) {
            let var = self.vars.get(v.0).ok_or(Error::UnknownVariable(v.0))?;
            if var.kind != VarKind::Binary {
                return Err(Error::NotBinary(var.name.clone()));
            }
        }
        let zname = self.vars[z.0].name.clone();
        let mut rows = Vec::with_capacity(factors.len() + 1);
        for (k, &f) in factors.iter().enumerate() {
            rows.push(self.add_row(format!("and_{zname}_le{k}"), vec![(z, 1.0), (f, -1.0)], Sense::Le, 0.0));
        }
        let mut terms = vec![(z, 1.0)];
        terms.extend(factors.iter().map(|&f| (f, -1.0)));
        let rhs = -(factors.len() as f64 - 1.0);
        rows.push(self.add_row(format!("and_{zname}_ge"), terms, Sense::Ge, rhs));
        Ok(rows)
    }

    /// Appends `sum(terms) <= rhs + big_m * (1 - indicator)`, i.e. the row is
    /// enforced when `indicator = 1` and vacuous otherwise (given `big_m`
    /// dominates the row's activity range).
    pub fn add_indicator_le(
        &mut self,
        name: impl Into<String>,
        indicator: VarId,
        mut terms: Vec<(VarId, f64)>,
        rhs: f64,
        big_m: f64,
    ) -> RowId {
        terms.push((indicator, big_m));
        self.add_row(name, terms, Sense::Le, rhs + big_m)
    }

    /// Checks structural invariants: valid indices, consistent bounds, and a
    /// symmetric positive semidefinite `Q`.
    pub fn validate(&self) -> Result<()> {
        let n = self.vars.len();
        for v in &self.vars {
            if v.lb > v.ub || v.lb.is_nan() || v.ub.is_nan() {
                return Err(Error::InvalidModel(format!("bad bounds on {}", v.name)));
            }
            if v.kind == VarKind::Binary && (v.lb < 0.0 || v.ub > 1.0) {
                return Err(Error::InvalidModel(format!("binary {} has bounds outside [0,1]", v.name)));
            }
        }
        for r in &self.rows {
            for &(v, a) in &r.terms {
                if v.0 >= n {
                    return Err(Error::UnknownVariable(v.0));
                }
                if !a.is_finite() {
                    return Err(Error::InvalidModel(format!("non-finite coefficient in {}", r.name)));
                }
            }
            if !r.rhs.is_finite() {
                return Err(Error::InvalidModel(format!("non-finite rhs in {}", r.name)));
            }
        }
        for (i, j, _) in self.quadratic_terms() {
            if j >= n {
                return Err(Error::UnknownVariable(j.max(i)));
            }
            if self.vars[i].kind == VarKind::Binary || self.vars[j].kind == VarKind::Binary {
                return Err(Error::InvalidModel("quadratic terms must involve continuous variables only".into()));
            }
        }
        self.check_psd()
    }

    fn check_psd(&self) -> Result<()> {
        let mut idx: Vec<usize> = self.quadratic_terms().flat_map(|(i, j, _)| [i, j]).collect();
        idx.sort_unstable();
        idx.dedup();
        if idx.is_empty() {
            return Ok(());
        }
        let pos = |k: usize| idx.binary_search(&k).unwrap();
        let mut q = DMatrix::zeros(idx.len(), idx.len());
        for (i, j, v) in self.quadratic_terms() {
            q[(pos(i), pos(j))] = v;
            q[(pos(j), pos(i))] = v;
        }
        let norm = q.norm();
        let min_eig = SymmetricEigen::new(q).eigenvalues.min();
        if min_eig < -1e-8 * norm.max(1.0) {
            return Err(Error::InvalidModel(format!("Q is not positive semidefinite (min eigenvalue {min_eig:e})")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn and_emits_one_row_per_factor_plus_one() {
        let mut m = Model::new("t");
        let z = m.add_binary("z");
        let f: Vec<_> = (0..3).map(|k| m.add_binary(format!("f{k}"))).collect();
        let rows = m.add_and(z, &f).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(m.num_rows(), 4);
    }

    #[test]
    fn and_rejects_continuous_factor() {
        let mut m = Model::new("t");
        let z = m.add_binary("z");
        let x = m.add_continuous("x", 0.0, 1.0);
        assert!(matches!(m.add_and(z, &[x]), Err(Error::NotBinary(_))));
    }

    #[test]
    fn and_truth_table() {
        let mut m = Model::new("t");
        let z = m.add_binary("z");
        let a = m.add_binary("a");
        let b = m.add_binary("b");
        m.add_and(z, &[a, b]).unwrap();
        for bits in 0..8u32 {
            let x = [(bits & 1) as f64, ((bits >> 1) & 1) as f64, ((bits >> 2) & 1) as f64];
            let feasible = m.max_violation(&x) <= 1e-12;
            assert_eq!(feasible, x[0] == x[1] * x[2], "bits {bits:03b}");
        }
    }

    #[test]
    fn objective_uses_half_diagonal() {
        let mut m = Model::new("t");
        let x = m.add_continuous("x", -10.0, 10.0);
        let y = m.add_continuous("y", -10.0, 10.0);
        m.add_quadratic(x, x, 2.0);
        m.add_quadratic(x, y, -1.0);
        m.set_linear(y, 3.0);
        // 0.5*2*x^2 - x*y + 3y at (2, 1)
        assert_eq!(m.objective(&[2.0, 1.0]), 4.0 - 2.0 + 3.0);
    }

    #[test]
    fn rejects_indefinite_q() {
        let mut m = Model::new("t");
        let x = m.add_continuous("x", -1.0, 1.0);
        let y = m.add_continuous("y", -1.0, 1.0);
        m.add_quadratic(x, y, 1.0);
        assert!(m.validate().is_err());
    }
}
