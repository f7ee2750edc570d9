//! Best-first branch-and-bound over the binary variables.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::time::Instant;

use ordered_float::OrderedFloat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, VarKind};
use crate::presolve::Presolve;
use crate::relax::{solve_with_bounds, RelaxStatus, RelaxTolerances, Relaxation};
use crate::{Solution, Status};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branching {
    /// Binary whose relaxed value is closest to 0.5; lowest index on ties.
    MostFractional,
    /// Lowest-index fractional binary.
    FirstFractional,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeSelection {
    /// Smallest relaxation bound first; creation order on ties.
    BestBound,
    /// Deepest node first; creation order on ties.
    DepthFirst,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Absolute row/bound violation accepted in an incumbent.
    pub feas_tol: f64,
    /// Distance from {0,1} below which a relaxed binary counts as integral.
    pub int_tol: f64,
    /// Relative gap at which the search is declared optimal.
    pub rel_gap: f64,
    /// Optional looser gap; reaching it stops with [`Status::GapLimit`].
    pub gap_limit: Option<f64>,
    pub node_limit: Option<u64>,
    /// Wall-clock limit in seconds.
    pub time_limit: Option<f64>,
    pub branching: Branching,
    pub node_selection: NodeSelection,
    /// Round-and-resolve dive from the root to find an early incumbent.
    pub root_dive: bool,
    /// Project out free equality-defined columns before searching.
    pub presolve: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            feas_tol: 1e-6,
            int_tol: 1e-6,
            rel_gap: 1e-6,
            gap_limit: None,
            node_limit: None,
            time_limit: None,
            branching: Branching::MostFractional,
            node_selection: NodeSelection::BestBound,
            root_dive: false,
            presolve: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub relaxations: u64,
    pub backend_iterations: u64,
    pub numerical_failures: u64,
    pub pruned_by_bound: u64,
    pub pruned_infeasible: u64,
    pub incumbent_updates: u64,
    pub max_depth: u32,
    pub start_accepted: bool,
}

struct Node {
    bound: f64,
    depth: u32,
    /// Per binary: -1 free, 0 or 1 fixed.
    fix: Vec<i8>,
    x: Vec<f64>,
}

type Key = (Reverse<OrderedFloat<f64>>, Reverse<u64>);

struct Search<'a> {
    model: &'a Model,
    cfg: &'a SolverConfig,
    bins: Vec<usize>,
    lb0: Vec<f64>,
    ub0: Vec<f64>,
    tol: RelaxTolerances,
    stats: SolveStats,
    incumbent: Option<(f64, Vec<f64>)>,
}

impl<'a> Search<'a> {
    fn new(model: &'a Model, cfg: &'a SolverConfig) -> Self {
        let bins = (0..model.num_vars()).filter(|&i| model.vars[i].kind == VarKind::Binary).collect();
        Search {
            model,
            cfg,
            bins,
            lb0: model.vars.iter().map(|v| v.lb).collect(),
            ub0: model.vars.iter().map(|v| v.ub).collect(),
            tol: RelaxTolerances::default(),
            stats: SolveStats::default(),
            incumbent: None,
        }
    }

    fn relax(&mut self, fix: &[i8]) -> Result<Relaxation> {
        let mut lb = self.lb0.clone();
        let mut ub = self.ub0.clone();
        for (k, &f) in fix.iter().enumerate() {
            if f >= 0 {
                lb[self.bins[k]] = f as f64;
                ub[self.bins[k]] = f as f64;
            }
        }
        let r = solve_with_bounds(self.model, &lb, &ub, self.tol)?;
        self.stats.relaxations += 1;
        self.stats.backend_iterations += r.iterations as u64;
        if r.status == RelaxStatus::Numerical {
            self.stats.numerical_failures += 1;
        }
        Ok(r)
    }

    fn ub(&self) -> f64 {
        self.incumbent.as_ref().map_or(f64::INFINITY, |(f, _)| *f)
    }

    fn prunable(&self, bound: f64) -> bool {
        let ub = self.ub();
        ub.is_finite() && bound >= ub - self.cfg.rel_gap * ub.abs().max(1.0)
    }

    /// Index into `bins` of the branching variable, or None if `x` is integral.
    fn pick(&self, fix: &[i8], x: &[f64]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (k, &i) in self.bins.iter().enumerate() {
            if fix[k] >= 0 {
                continue;
            }
            let frac = (x[i] - x[i].round()).abs();
            if frac <= self.cfg.int_tol {
                continue;
            }
            match self.cfg.branching {
                Branching::FirstFractional => return Some(k),
                Branching::MostFractional => {
                    if best.is_none_or(|(_, f)| frac > f) {
                        best = Some((k, frac));
                    }
                }
            }
        }
        best.map(|(k, _)| k)
    }

    /// Fixes every binary at its rounded value, re-solves, and keeps the point
    /// if it is feasible and improves the incumbent.
    fn polish(&mut self, x: &[f64]) -> Result<bool> {
        let fix: Vec<i8> = self.bins.iter().map(|&i| if x[i] >= 0.5 { 1 } else { 0 }).collect();
        let r = self.relax(&fix)?;
        if r.status == RelaxStatus::Infeasible || r.status == RelaxStatus::Unbounded {
            return Ok(false);
        }
        if self.model.max_violation(&r.x) > self.cfg.feas_tol {
            return Ok(false);
        }
        if r.objective < self.ub() {
            self.incumbent = Some((r.objective, r.x));
            self.stats.incumbent_updates += 1;
            return Ok(true);
        }
        Ok(false)
    }

    fn dive(&mut self, root: &Node) -> Result<()> {
        let mut fix = root.fix.clone();
        let mut x = root.x.clone();
        while let Some(k) = self.pick(&fix, &x) {
            fix[k] = if x[self.bins[k]] >= 0.5 { 1 } else { 0 };
            let r = self.relax(&fix)?;
            if r.status != RelaxStatus::Optimal || self.prunable(r.objective) {
                return Ok(());
            }
            x = r.x;
        }
        self.polish(&x)?;
        Ok(())
    }

    fn key(&self, node: &Node, id: u64) -> Key {
        let primary = match self.cfg.node_selection {
            NodeSelection::BestBound => node.bound,
            NodeSelection::DepthFirst => -(node.depth as f64),
        };
        (Reverse(OrderedFloat(primary)), Reverse(id))
    }

    fn gap(&self, lb: f64) -> f64 {
        let ub = self.ub();
        if !ub.is_finite() {
            return f64::INFINITY;
        }
        ((ub - lb) / ub.abs().max(1.0)).max(0.0)
    }

    fn run(mut self, starts: &[Vec<f64>]) -> Result<Solution> {
        let t0 = Instant::now();
        let nb = self.bins.len();

        for s in starts {
            let accepted = self.polish(s)?;
            self.stats.start_accepted |= accepted;
        }

        let root_fix = vec![-1i8; nb];
        let r = self.relax(&root_fix)?;
        match r.status {
            RelaxStatus::Infeasible => return Ok(self.finish(Status::Infeasible, f64::INFINITY, 1)),
            RelaxStatus::Unbounded => return Err(Error::Unbounded),
            _ => {}
        }
        let root = Node { bound: r.objective, depth: 0, fix: root_fix, x: r.x };
        if self.cfg.root_dive {
            self.dive(&root)?;
        }

        let mut heap: BinaryHeap<(Key, usize)> = BinaryHeap::new();
        let mut store: Vec<Option<Node>> = Vec::new();
        let mut next_id = 0u64;
        let push = |s: &Self, heap: &mut BinaryHeap<(Key, usize)>, store: &mut Vec<Option<Node>>, id: &mut u64, n: Node| {
            heap.push((s.key(&n, *id), store.len()));
            store.push(Some(n));
            *id += 1;
        };
        push(&self, &mut heap, &mut store, &mut next_id, root);

        let mut nodes = 0u64;
        let mut status = Status::Optimal;
        let mut lower = f64::NEG_INFINITY;
        while let Some(&(_, slot)) = heap.peek() {
            lower = match self.cfg.node_selection {
                NodeSelection::BestBound => store[slot].as_ref().unwrap().bound,
                NodeSelection::DepthFirst => {
                    heap.iter().map(|&(_, s)| store[s].as_ref().unwrap().bound).fold(f64::INFINITY, f64::min)
                }
            };
            if self.prunable(lower) && self.cfg.node_selection == NodeSelection::BestBound {
                // Every open node is dominated by the incumbent.
                self.stats.pruned_by_bound += heap.len() as u64;
                heap.clear();
                break;
            }
            if let Some(g) = self.cfg.gap_limit {
                if self.gap(lower) <= g {
                    status = Status::GapLimit;
                    break;
                }
            }
            if self.cfg.node_limit.is_some_and(|l| nodes >= l) {
                status = Status::NodeLimit;
                break;
            }
            if self.cfg.time_limit.is_some_and(|l| t0.elapsed().as_secs_f64() >= l) {
                status = Status::TimeLimit;
                break;
            }

            heap.pop();
            let node = store[slot].take().unwrap();
            nodes += 1;
            if self.prunable(node.bound) {
                self.stats.pruned_by_bound += 1;
                continue;
            }
            self.stats.max_depth = self.stats.max_depth.max(node.depth);

            let Some(k) = self.pick(&node.fix, &node.x) else {
                self.polish(&node.x)?;
                continue;
            };
            for val in [0i8, 1] {
                let mut fix = node.fix.clone();
                fix[k] = val;
                let r = self.relax(&fix)?;
                let bound = match r.status {
                    RelaxStatus::Infeasible => {
                        self.stats.pruned_infeasible += 1;
                        continue;
                    }
                    RelaxStatus::Unbounded => return Err(Error::Unbounded),
                    RelaxStatus::Optimal => r.objective.max(node.bound),
                    // No certificate: keep the parent's bound, which stays valid.
                    RelaxStatus::Numerical => node.bound,
                };
                if self.prunable(bound) {
                    self.stats.pruned_by_bound += 1;
                    continue;
                }
                let child = Node { bound, depth: node.depth + 1, fix, x: r.x };
                if r.status == RelaxStatus::Optimal && self.pick(&child.fix, &child.x).is_none() {
                    self.polish(&child.x)?;
                    continue;
                }
                push(&self, &mut heap, &mut store, &mut next_id, child);
            }
        }

        if heap.is_empty() {
            lower = self.ub();
            status = if self.incumbent.is_some() { Status::Optimal } else { Status::Infeasible };
        }
        Ok(self.finish(status, lower, nodes))
    }

    fn finish(self, status: Status, lower: f64, nodes: u64) -> Solution {
        let gap = self.gap(lower);
        let (objective, values) = self.incumbent.unwrap_or((f64::INFINITY, Vec::new()));
        Solution { values, objective, status, gap, best_bound: lower, nodes, stats: self.stats }
    }
}

/// Solves `model` by branch-and-bound.
pub fn solve_bb(model: &Model, cfg: &SolverConfig) -> Result<Solution> {
    solve(model, cfg, &[])
}

/// Like [`solve_bb`], seeding the incumbent from `start`: binaries are
/// rounded and fixed, and the continuous part re-solved.
pub fn solve_bb_with_start(model: &Model, cfg: &SolverConfig, start: &[f64]) -> Result<Solution> {
    solve(model, cfg, &[start])
}

/// Like [`solve_bb_with_start`] for several candidate starts; the best
/// feasible one becomes the incumbent.
pub fn solve_bb_with_starts(model: &Model, cfg: &SolverConfig, starts: &[&[f64]]) -> Result<Solution> {
    solve(model, cfg, starts)
}

fn solve(model: &Model, cfg: &SolverConfig, starts: &[&[f64]]) -> Result<Solution> {
    model.validate()?;
    if let Some(s) = starts.iter().find(|s| s.len() != model.num_vars()) {
        return Err(Error::InvalidModel(format!(
            "start has {} values, model has {} variables",
            s.len(),
            model.num_vars()
        )));
    }
    if !cfg.presolve {
        let starts: Vec<Vec<f64>> = starts.iter().map(|s| s.to_vec()).collect();
        return Search::new(model, cfg).run(&starts);
    }
    let pre = Presolve::new(model)?;
    let starts: Vec<Vec<f64>> = starts.iter().map(|s| pre.restrict(s)).collect();
    let mut sol = Search::new(pre.model(), cfg).run(&starts)?;
    if sol.is_feasible() {
        sol.values = pre.expand(&sol.values);
        sol.objective = model.objective(&sol.values);
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Sense;

    fn knapsack() -> Model {
        // max 5a + 4b + 3c  s.t. 2a + 3b + c <= 4  (as a minimisation)
        let mut m = Model::new("knap");
        let a = m.add_binary("a");
        let b = m.add_binary("b");
        let c = m.add_binary("c");
        m.set_linear(a, -5.0);
        m.set_linear(b, -4.0);
        m.set_linear(c, -3.0);
        m.add_row("cap", vec![(a, 2.0), (b, 3.0), (c, 1.0)], Sense::Le, 4.0);
        m
    }

    #[test]
    fn knapsack_optimum() {
        let s = solve_bb(&knapsack(), &SolverConfig::default()).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.objective + 8.0).abs() < 1e-6, "{}", s.objective);
        assert_eq!(s.values.iter().map(|v| v.round() as i32).collect::<Vec<_>>(), vec![1, 0, 1]);
    }

    #[test]
    fn infeasible_model() {
        let mut m = Model::new("inf");
        let a = m.add_binary("a");
        let b = m.add_binary("b");
        m.add_row("r", vec![(a, 1.0), (b, 1.0)], Sense::Eq, 1.5);
        let s = solve_bb(&m, &SolverConfig::default()).unwrap();
        assert_eq!(s.status, Status::Infeasible);
        assert!(!s.is_feasible());
    }

    #[test]
    fn start_is_used_as_incumbent() {
        let cfg = SolverConfig { node_limit: Some(0), ..Default::default() };
        let s = solve_bb_with_start(&knapsack(), &cfg, &[1.0, 0.0, 0.0]).unwrap();
        assert!(s.stats.start_accepted);
        assert_eq!(s.status, Status::NodeLimit);
        assert!((s.objective + 5.0).abs() < 1e-6);
    }

    #[test]
    fn depth_first_agrees() {
        let cfg = SolverConfig { node_selection: NodeSelection::DepthFirst, root_dive: true, ..Default::default() };
        let s = solve_bb(&knapsack(), &cfg).unwrap();
        assert!((s.objective + 8.0).abs() < 1e-6);
    }
}
