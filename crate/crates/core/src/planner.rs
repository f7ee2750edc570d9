//! One receding-horizon planning problem as a mixed-integer QP.
//!
//! Trajectories are linear combinations `g` of Hankel columns anchored on a
//! `K`-step past window. Per target and step, a binary `γ` claims an
//! inspection; it needs some orientation `φ` that is back-face admissible,
//! selected (`ω`), and whose FOV contains the facet centroid (`ψ`, from five
//! per-face indicators `ψ'`). Inspection progress `ξ` accumulates and is
//! rewarded once at the end of the horizon. Positions avoid the structure
//! hull through one relaxable indicator `o` per hull plane.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use miqp::{Model, NodeSelection, Presolve, RelaxStatus, Sense, Solution, SolveStats, SolverConfig, Status, VarId, VarKind};

use crate::error::{Error, Result};
use crate::excitation::HankelBlocks;
use crate::geometry::{FovCatalog, InspectionScene};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanningConfig {
    /// Past window length (at least the observability lag, 1 here).
    pub k: usize,
    /// Prediction horizon.
    pub horizon: usize,
    /// Smoothness weight.
    pub w1: f64,
    /// Inspection reward weight.
    pub w2: f64,
    /// Catalog indices the gimbal may use; empty means all.
    pub orientations: Vec<usize>,
    /// Per-axis position box `[lo, hi]` [m].
    pub workspace: [[f64; 2]; 3],
    /// Collision margin [m], also the strictness slack of the hull rows.
    pub epsilon: f64,
    pub input_bounds: Vec<(f64, f64)>,
    /// Shrink the per-step position box with LPs over the data model before
    /// sizing big-M constants.
    pub tighten_bounds: bool,
    /// Also penalise `u(0) - u_prev` (off by default: the sum starts at 1).
    pub penalize_first_move: bool,
    /// Fix face indicators to 1 where containment holds over the whole
    /// position box. Exact, but it slows the relaxations on full-size
    /// instances; meant for shrinking instances before enumeration.
    pub pin_redundant_faces: bool,
    pub heuristic: HeuristicConfig,
    pub solver: SolverConfig,
}

/// Greedy incumbent search run before branch-and-bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeuristicConfig {
    pub enabled: bool,
    /// Node budget of the depth-first search that completes the greedy fixings.
    pub finish_nodes: u64,
    /// Candidates per round that are tried before the search stops.
    pub attempts: usize,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        HeuristicConfig { enabled: true, finish_nodes: 20, attempts: 4 }
    }
}

impl Default for PlanningConfig {
    fn default() -> Self {
        PlanningConfig {
            k: 1,
            horizon: 8,
            w1: 5e-3,
            w2: 15.0,
            orientations: Vec::new(),
            workspace: [[-50.0, 50.0]; 3],
            epsilon: 1e-3,
            input_bounds: vec![(-3.0, 3.0), (-2.0, 2.0), (-2.0, 2.0), (-2.0, 2.0)],
            tighten_bounds: true,
            penalize_first_move: false,
            pin_redundant_faces: false,
            heuristic: HeuristicConfig::default(),
            // Receding horizon: a good plan now beats a proven one later.
            solver: SolverConfig { gap_limit: Some(1e-2), node_limit: Some(20), ..SolverConfig::default() },
        }
    }
}

impl PlanningConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::InvalidParam("K must be at least 1".into()));
        }
        if self.horizon < 1 {
            return Err(Error::InvalidParam("N must be at least 1".into()));
        }
        if !(self.w1 > 0.0 && self.w2 > 0.0) {
            return Err(Error::InvalidParam("weights must be positive".into()));
        }
        if self.workspace.iter().any(|[lo, hi]| !(lo < hi) || !lo.is_finite() || !hi.is_finite()) {
            return Err(Error::InvalidParam("workspace box must be bounded and non-empty".into()));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::InvalidParam("epsilon must be non-negative".into()));
        }
        Ok(())
    }
}

/// Everything that changes from one planning step to the next, plus the
/// fixed scene data.
pub struct PlanInputs<'a> {
    pub blocks: &'a HankelBlocks,
    /// Past inputs, `m × K`, oldest first.
    pub u_past: &'a DMatrix<f64>,
    /// Past outputs, `p × K`.
    pub y_past: &'a DMatrix<f64>,
    /// Inspection memory `Ξ` per target.
    pub memory: &'a [bool],
    /// Carried inspection value `ξ(t|t-1)` per target.
    pub carry: &'a [f64],
    pub catalog: &'a FovCatalog,
    /// Back-face table over the full catalog, `[target][φ]`.
    pub backface: &'a [Vec<bool>],
    pub scene: &'a InspectionScene,
    /// Output indices holding position.
    pub h: [usize; 3],
}

/// Column indices of every group of variables. Time runs over the horizon
/// `τ = 0..N` (`ξ` has one extra entry for `τ = N`).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VarMap {
    pub horizon: usize,
    /// Active catalog indices; `ω[τ][k]` refers to `orientations[k]`.
    pub orientations: Vec<usize>,
    /// Back-face admissible `(target, k)` pairs, `k` into `orientations`.
    pub pairs: Vec<(usize, usize)>,
    pub g: Vec<VarId>,
    pub u: Vec<Vec<VarId>>,
    pub y: Vec<Vec<VarId>>,
    pub xi: Vec<Vec<VarId>>,
    pub varpi: Vec<Vec<VarId>>,
    pub gamma: Vec<Vec<VarId>>,
    pub omega: Vec<Vec<VarId>>,
    pub psi: Vec<Vec<VarId>>,
    pub psi_face: Vec<Vec<[VarId; 5]>>,
    pub z: Vec<Vec<VarId>>,
    pub o: Vec<Vec<VarId>>,
}

/// Closed-form variable counts of a compiled model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Census {
    pub continuous: usize,
    pub binary: usize,
}

/// Variable counts for `Tc` Hankel columns, `m` inputs, `p` outputs,
/// `targets` targets, `orientations` active orientations, `pairs`
/// admissible (target, orientation) pairs, `planes` hull planes and horizon `n`:
///
/// * continuous: `Tc + (m + p)·N + targets·(2N + 1)` (`g`, `u`, `y`, `ξ`, `ϖ`)
/// * binary: `N·(targets + orientations + 7·pairs + planes)`
///   (`γ`, `ω`, `ψ`, five `ψ'`, `z`, `o`)
pub fn census(tc: usize, m: usize, p: usize, targets: usize, orientations: usize, pairs: usize, planes: usize, n: usize) -> Census {
    Census {
        continuous: tc + (m + p) * n + targets * (2 * n + 1),
        binary: n * (targets + orientations + 7 * pairs + planes),
    }
}

/// One entry of the variable-map dump.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ColumnInfo {
    pub column: usize,
    pub name: String,
    pub kind: String,
    pub lb: f64,
    pub ub: f64,
}

impl VarMap {
    /// Names and bounds of every model column, for debugging dumps.
    pub fn columns(&self, model: &Model) -> Vec<ColumnInfo> {
        model
            .vars
            .iter()
            .enumerate()
            .map(|(column, v)| ColumnInfo {
                column,
                name: v.name.clone(),
                kind: match v.kind {
                    VarKind::Binary => "binary".into(),
                    VarKind::Continuous => "continuous".into(),
                },
                lb: v.lb,
                ub: v.ub,
            })
            .collect()
    }

    /// All binary columns grouped by the time step they belong to.
    fn binaries_at(&self, tau: usize) -> Vec<VarId> {
        let mut out: Vec<VarId> = Vec::new();
        out.extend(self.gamma.iter().map(|g| g[tau]));
        out.extend(&self.omega[tau]);
        out.extend(self.psi.iter().map(|p| p[tau]));
        for pf in &self.psi_face {
            out.extend(pf[tau]);
        }
        out.extend(self.z.iter().map(|z| z[tau]));
        out.extend(&self.o[tau]);
        out
    }

    /// Start vector for the next step: binaries of step `τ+1` move to `τ`,
    /// the last step repeats. Continuous entries are left at zero; the
    /// solver re-optimises them with the binaries fixed.
    pub fn shifted_start(&self, values: &[f64], n_vars: usize) -> Vec<f64> {
        let mut start = vec![0.0; n_vars];
        for tau in 0..self.horizon {
            let src = (tau + 1).min(self.horizon - 1);
            for (dst, from) in self.binaries_at(tau).into_iter().zip(self.binaries_at(src)) {
                start[dst.0] = values[from.0];
            }
        }
        start
    }
}

fn check_inputs(cfg: &PlanningConfig, inp: &PlanInputs) -> Result<()> {
    let b = inp.blocks;
    let nt = inp.scene.targets.len();
    if b.k != cfg.k || b.horizon != cfg.horizon {
        return Err(Error::Dimension(format!("blocks have K={} N={}, config K={} N={}", b.k, b.horizon, cfg.k, cfg.horizon)));
    }
    if inp.u_past.shape() != (b.m, cfg.k) || inp.y_past.shape() != (b.p, cfg.k) {
        return Err(Error::Dimension("past window shape".into()));
    }
    if cfg.input_bounds.len() != b.m {
        return Err(Error::Dimension(format!("{} input bounds for {} inputs", cfg.input_bounds.len(), b.m)));
    }
    if inp.memory.len() != nt || inp.carry.len() != nt || inp.backface.len() != nt {
        return Err(Error::Dimension("per-target inputs must match the target count".into()));
    }
    if inp.backface.iter().any(|row| row.len() != inp.catalog.len()) {
        return Err(Error::Dimension("back-face table width must match the catalog".into()));
    }
    for (i, (&mem, &c)) in inp.memory.iter().zip(inp.carry).enumerate() {
        if mem && c != 1.0 {
            return Err(Error::InvalidParam(format!("target {i} is in memory but carries ξ = {c}")));
        }
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::InvalidParam(format!("carry {c} of target {i} outside [0, 1]")));
        }
    }
    if inp.h.iter().any(|&k| k >= b.p) {
        return Err(Error::Dimension("position selector outside the output".into()));
    }
    Ok(())
}

/// Builds the data-consistency part (g, u, y and their rows) on `model`.
fn add_trajectory(model: &mut Model, cfg: &PlanningConfig, inp: &PlanInputs) -> (Vec<VarId>, Vec<Vec<VarId>>, Vec<Vec<VarId>>) {
    let b = inp.blocks;
    let (m, p, n) = (b.m, b.p, cfg.horizon);
    let g: Vec<VarId> = (0..b.cols()).map(|j| model.add_continuous(format!("g[{j}]"), f64::NEG_INFINITY, f64::INFINITY)).collect();
    let row_terms = |mat: &DMatrix<f64>, r: usize| -> Vec<(VarId, f64)> {
        g.iter().zip(mat.row(r).iter()).filter(|(_, &a)| a != 0.0).map(|(&v, &a)| (v, a)).collect()
    };
    for kappa in 0..cfg.k {
        for c in 0..m {
            let t = row_terms(&b.up, kappa * m + c);
            model.add_row(format!("init_u[k={kappa},c={c}]"), t, Sense::Eq, inp.u_past[(c, kappa)]);
        }
        for c in 0..p {
            let t = row_terms(&b.yp, kappa * p + c);
            model.add_row(format!("init_y[k={kappa},c={c}]"), t, Sense::Eq, inp.y_past[(c, kappa)]);
        }
    }
    let mut u = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for tau in 0..n {
        let mut ut = Vec::with_capacity(m);
        for c in 0..m {
            let (lo, hi) = cfg.input_bounds[c];
            let v = model.add_continuous(format!("u[tau={tau},c={c}]"), lo, hi);
            let mut t = row_terms(&b.uf, tau * m + c);
            t.push((v, -1.0));
            model.add_row(format!("def_u[tau={tau},c={c}]"), t, Sense::Eq, 0.0);
            ut.push(v);
        }
        let mut yt = Vec::with_capacity(p);
        for c in 0..p {
            let (lo, hi) = match inp.h.iter().position(|&k| k == c) {
                Some(axis) => (cfg.workspace[axis][0], cfg.workspace[axis][1]),
                None => (f64::NEG_INFINITY, f64::INFINITY),
            };
            let v = model.add_continuous(format!("y[tau={tau},c={c}]"), lo, hi);
            let mut t = row_terms(&b.yf, tau * p + c);
            t.push((v, -1.0));
            model.add_row(format!("def_y[tau={tau},c={c}]"), t, Sense::Eq, 0.0);
            yt.push(v);
        }
        u.push(ut);
        y.push(yt);
    }
    (g, u, y)
}

/// Per-step position box: the workspace, optionally shrunk by minimising and
/// maximising each position coordinate over the data-consistent trajectories.
fn position_boxes(
    base: &Model,
    y: &[Vec<VarId>],
    cfg: &PlanningConfig,
    h: [usize; 3],
) -> Result<Vec<[[f64; 2]; 3]>> {
    let mut boxes = vec![cfg.workspace; cfg.horizon];
    if !cfg.tighten_bounds {
        return Ok(boxes);
    }
    // Project out g once; the LPs then only see inputs and positions.
    let pre = Presolve::new(base)?;
    let mut lp = pre.model().clone();
    for (tau, bx) in boxes.iter_mut().enumerate() {
        for axis in 0..3 {
            let v = pre.reduced_var(y[tau][h[axis]]).expect("bounded outputs are kept");
            for (side, sign) in [(0usize, 1.0), (1usize, -1.0)] {
                lp.linear.iter_mut().for_each(|c| *c = 0.0);
                lp.set_linear(v, sign);
                let r = miqp::solve_relaxation(&lp)?;
                match r.status {
                    RelaxStatus::Optimal => {
                        // Keep a little slack so solver noise never cuts a feasible point.
                        let val = r.x[v.0];
                        let pad = 1e-6 * val.abs().max(1.0);
                        bx[axis][side] = if side == 0 { (val - pad).max(bx[axis][0]) } else { (val + pad).min(bx[axis][1]) };
                    }
                    RelaxStatus::Infeasible => {
                        return Err(Error::Plan(format!("no data-consistent trajectory keeps step {tau} inside the workspace")));
                    }
                    // Without a certificate the workspace bound stays.
                    _ => {}
                }
            }
            if bx[axis][0] > bx[axis][1] {
                let mid = 0.5 * (bx[axis][0] + bx[axis][1]);
                bx[axis] = [mid, mid];
            }
        }
    }
    Ok(boxes)
}

/// Maximum and minimum of `c · p` over a box.
fn box_range(c: &Vector3<f64>, bx: &[[f64; 2]; 3]) -> (f64, f64) {
    let mut lo = 0.0;
    let mut hi = 0.0;
    for k in 0..3 {
        let a = c[k] * bx[k][0];
        let b = c[k] * bx[k][1];
        lo += a.min(b);
        hi += a.max(b);
    }
    (lo, hi)
}

/// Compiles one planning problem.
pub fn compile(cfg: &PlanningConfig, inp: &PlanInputs) -> Result<(Model, VarMap)> {
    cfg.validate()?;
    check_inputs(cfg, inp)?;
    let orientations: Vec<usize> =
        if cfg.orientations.is_empty() { (0..inp.catalog.len()).collect() } else { cfg.orientations.clone() };
    if orientations.is_empty() {
        return Err(Error::InvalidParam("empty orientation set".into()));
    }
    if let Some(&bad) = orientations.iter().find(|&&o| o >= inp.catalog.len()) {
        return Err(Error::InvalidParam(format!("orientation {bad} outside catalog of {}", inp.catalog.len())));
    }
    let n = cfg.horizon;
    let scene = inp.scene;
    let nt = scene.targets.len();
    let hull = &scene.hull;

    let mut model = Model::new("plan");
    let (g, u, y) = add_trajectory(&mut model, cfg, inp);
    let boxes = position_boxes(&model, &y, cfg, inp.h)?;
    let pos = |tau: usize| -> [VarId; 3] { [y[tau][inp.h[0]], y[tau][inp.h[1]], y[tau][inp.h[2]]] };

    // Inspection dynamics.
    let mut xi = Vec::with_capacity(nt);
    let mut varpi = Vec::with_capacity(nt);
    let mut gamma = Vec::with_capacity(nt);
    for i in 0..nt {
        let mem = if inp.memory[i] { 1.0 } else { 0.0 };
        let xs: Vec<VarId> = (0..=n)
            .map(|tau| {
                if tau == 0 {
                    model.add_continuous(format!("xi[i={i},tau=0]"), inp.carry[i], inp.carry[i])
                } else {
                    model.add_continuous(format!("xi[i={i},tau={tau}]"), 0.0, 1.0)
                }
            })
            .collect();
        let ws: Vec<VarId> = (0..n).map(|tau| model.add_continuous(format!("varpi[i={i},tau={tau}]"), 0.0, 1.0)).collect();
        let gs: Vec<VarId> = (0..n).map(|tau| model.add_binary(format!("gamma[i={i},tau={tau}]"))).collect();
        for tau in 0..n {
            model.add_row(
                format!("xi_step[i={i},tau={tau}]"),
                vec![(xs[tau + 1], 1.0), (xs[tau], -1.0), (ws[tau], -1.0)],
                Sense::Eq,
                0.0,
            );
            model.add_row(format!("varpi_cap[i={i},tau={tau}]"), vec![(ws[tau], 1.0), (gs[tau], -1.0)], Sense::Le, mem);
        }
        xi.push(xs);
        varpi.push(ws);
        gamma.push(gs);
    }

    // Orientation selection.
    let omega: Vec<Vec<VarId>> = (0..n)
        .map(|tau| {
            let w: Vec<VarId> =
                orientations.iter().map(|&phi| model.add_binary(format!("omega[phi={phi},tau={tau}]"))).collect();
            model.add_row(format!("one_orientation[tau={tau}]"), w.iter().map(|&v| (v, 1.0)).collect(), Sense::Eq, 1.0);
            w
        })
        .collect();

    // Visibility for back-face admissible pairs only.
    let mut pairs = Vec::new();
    for i in 0..nt {
        for (k, &phi) in orientations.iter().enumerate() {
            if inp.backface[i][phi] {
                pairs.push((i, k));
            }
        }
    }
    let mut psi = Vec::with_capacity(pairs.len());
    let mut psi_face = Vec::with_capacity(pairs.len());
    let mut zs = Vec::with_capacity(pairs.len());
    for &(i, k) in &pairs {
        let phi = orientations[k];
        let fov = &inp.catalog.orientations[phi];
        let centroid = scene.mesh.centroids[scene.targets.targets[i].facet_index];
        let mut psi_i = Vec::with_capacity(n);
        let mut face_i = Vec::with_capacity(n);
        let mut z_i = Vec::with_capacity(n);
        for tau in 0..n {
            let p = pos(tau);
            let mut faces = [VarId(0); 5];
            for j in 0..5 {
                let gj: Vector3<f64> = fov.gamma.row(j).transpose();
                let v = model.add_binary(format!("psi'[j={j},i={i},phi={phi},tau={tau}]"));
                // Facet inside face j: Γ_j s̄ - Δ_j - Γ_j p ≤ M (1 - ψ').
                let konst = gj.dot(&centroid) - fov.delta[j];
                let (lo, hi) = box_range(&(-gj), &boxes[tau]);
                let (lhs_min, lhs_max) = (konst + lo, konst + hi);
                if lhs_min > 0.0 {
                    // The face can never hold inside the box.
                    model.set_bounds(v, 0.0, 0.0);
                } else if lhs_max <= 0.0 && cfg.pin_redundant_faces {
                    // It always holds; setting the indicator loses nothing.
                    model.set_bounds(v, 1.0, 1.0);
                }
                let big_m = lhs_max.max(0.0) + 1.0;
                let mut terms: Vec<(VarId, f64)> =
                    (0..3).filter(|&a| gj[a] != 0.0).map(|a| (p[a], -gj[a])).collect();
                terms.push((v, big_m));
                model.add_row(format!("contain[j={j},i={i},phi={phi},tau={tau}]"), terms, Sense::Le, big_m - konst);
                faces[j] = v;
            }
            let s = model.add_binary(format!("psi[i={i},phi={phi},tau={tau}]"));
            let mut agg = vec![(s, 5.0)];
            agg.extend(faces.iter().map(|&f| (f, -1.0)));
            model.add_row(format!("psi_all[i={i},phi={phi},tau={tau}]"), agg, Sense::Le, 0.0);
            let z = model.add_binary(format!("z[i={i},phi={phi},tau={tau}]"));
            model.add_and(z, &[s, omega[tau][k]])?;
            psi_i.push(s);
            face_i.push(faces);
            z_i.push(z);
        }
        psi.push(psi_i);
        psi_face.push(face_i);
        zs.push(z_i);
    }
    for i in 0..nt {
        for tau in 0..n {
            let mut terms = vec![(gamma[i][tau], 1.0)];
            for (pi, &(ti, _)) in pairs.iter().enumerate() {
                if ti == i {
                    terms.push((zs[pi][tau], -1.0));
                }
            }
            model.add_row(format!("gamma_needs_view[i={i},tau={tau}]"), terms, Sense::Le, 0.0);
        }
    }

    // Collision avoidance: at least one hull plane separates each position.
    let planes = hull.len();
    let mut o = Vec::with_capacity(n);
    for tau in 0..n {
        let p = pos(tau);
        let mut ot = Vec::with_capacity(planes);
        for j in 0..planes {
            let a = hull.alpha[j];
            let v = model.add_binary(format!("o[j={j},tau={tau}]"));
            // α_j p ≥ β_j + ε - M o_j.
            let (lo, hi) = box_range(&a, &boxes[tau]);
            if hi < hull.beta[j] + cfg.epsilon {
                // The plane cannot separate any point of the box.
                model.set_bounds(v, 1.0, 1.0);
            }
            let big_m = (hull.beta[j] + cfg.epsilon - lo).max(0.0) + 1.0;
            let mut terms: Vec<(VarId, f64)> = (0..3).filter(|&k| a[k] != 0.0).map(|k| (p[k], a[k])).collect();
            terms.push((v, big_m));
            model.add_row(format!("avoid[j={j},tau={tau}]"), terms, Sense::Ge, hull.beta[j] + cfg.epsilon);
            ot.push(v);
        }
        model.add_row(
            format!("avoid_any[tau={tau}]"),
            ot.iter().map(|&v| (v, 1.0)).collect(),
            Sense::Le,
            planes as f64 - 1.0,
        );
        o.push(ot);
    }

    // Objective: w1 Σ |u(τ) - u(τ-1)|² - w2 Σ r_i ξ_i(N).
    let w1 = cfg.w1;
    for tau in 1..n {
        for c in 0..inp.blocks.m {
            let (a, b) = (u[tau][c], u[tau - 1][c]);
            model.add_quadratic(a, a, 2.0 * w1);
            model.add_quadratic(b, b, 2.0 * w1);
            model.add_quadratic(a, b, -2.0 * w1);
        }
    }
    if cfg.penalize_first_move {
        for c in 0..inp.blocks.m {
            let prev = inp.u_past[(c, cfg.k - 1)];
            let a = u[0][c];
            model.add_quadratic(a, a, 2.0 * w1);
            model.add_linear(a, -2.0 * w1 * prev);
            model.offset += w1 * prev * prev;
        }
    }
    for (i, t) in scene.targets.targets.iter().enumerate() {
        model.add_linear(xi[i][n], -cfg.w2 * t.reward);
    }

    let map = VarMap { horizon: n, orientations, pairs, g, u, y, xi, varpi, gamma, omega, psi, psi_face, z: zs, o };
    Ok((model, map))
}

/// Relaxation values closer than this count as ties in the greedy ranking.
const GREEDY_TIE: f64 = 1e-3;

/// Binary fixings that make target `pair.0` seen through orientation
/// `pair.1` at step `tau`.
fn view_fixings(map: &VarMap, pair: usize, tau: usize) -> Vec<(VarId, f64)> {
    let (i, k) = map.pairs[pair];
    let mut fix = vec![(map.gamma[i][tau], 1.0), (map.psi[pair][tau], 1.0), (map.z[pair][tau], 1.0)];
    fix.extend(map.psi_face[pair][tau].iter().map(|&v| (v, 1.0)));
    fix.extend(map.omega[tau].iter().enumerate().map(|(kk, &w)| (w, if kk == k { 1.0 } else { 0.0 })));
    fix
}

/// Greedy incumbent for a compiled problem.
///
/// Views `(target, orientation, step)` are committed one at a time,
/// earliest step first. At each free step every uninspected target is
/// relaxed with its view fixed; the feasible candidates are ranked by
/// relaxation value and the first one whose fixings can be completed to a
/// feasible point is committed.
/// Returns a full start vector, or `None` when not even the empty
/// commitment can be completed.
pub fn greedy_start(model: &Model, map: &VarMap, memory: &[bool], cfg: &PlanningConfig) -> Result<Option<Vec<f64>>> {
    let pre = Presolve::new(model)?;
    // View binaries outside the trial set sit at their lower bound, so a
    // candidate is scored by what exactly these views cost.
    let views_off: Vec<(VarId, f64)> = map
        .gamma
        .iter()
        .chain(&map.psi)
        .chain(&map.z)
        .flatten()
        .copied()
        .chain(map.psi_face.iter().flatten().flatten().copied())
        .map(|v| {
            let r = pre.reduced_var(v).expect("binaries are never projected out");
            (r, pre.model().var(r).lb)
        })
        .collect();
    let relax_with = |fix: &[(VarId, f64)]| -> Result<Option<f64>> {
        let mut m = pre.model().clone();
        for &(r, lb) in &views_off {
            m.set_bounds(r, lb, lb);
        }
        for &(v, val) in fix {
            let r = pre.reduced_var(v).expect("binaries are never projected out");
            let var = pre.model().var(r);
            if var.lb > val || var.ub < val {
                return Ok(None);
            }
            m.set_bounds(r, val, val);
        }
        let r = miqp::solve_relaxation(&m)?;
        Ok((r.status == RelaxStatus::Optimal).then_some(r.objective))
    };

    let mut views: Vec<(usize, usize)> = Vec::new();
    let mut fix: Vec<(VarId, f64)> = Vec::new();
    let Some(mut incumbent) = complete(model, map, &fix, &views, cfg, true)? else { return Ok(None) };
    // Commitments only shrink the feasible set, so a dead candidate stays dead.
    let mut dead = vec![vec![false; map.horizon]; map.pairs.len()];
    'round: loop {
        for tau in 0..map.horizon {
            if views.iter().any(|&(_, t)| t == tau) {
                continue;
            }
            let mut ranked: Vec<(f64, usize)> = Vec::new();
            for (pair, &(i, _)) in map.pairs.iter().enumerate() {
                if dead[pair][tau] || memory[i] || views.iter().any(|&(p, _)| map.pairs[p].0 == i) {
                    continue;
                }
                let mut trial = fix.clone();
                trial.extend(view_fixings(map, pair, tau));
                match relax_with(&trial)? {
                    Some(obj) => ranked.push((obj, pair)),
                    None => dead[pair][tau] = true,
                }
            }
            // Lowest bound first, bounds within solver noise counting as
            // equal; the sort is stable, so pair order breaks ties.
            let key = |v: f64| (v / GREEDY_TIE).round() as i64;
            ranked.sort_by_key(|&(obj, _)| key(obj));
            for &(_, pair) in ranked.iter().take(cfg.heuristic.attempts) {
                let mut trial = fix.clone();
                trial.extend(view_fixings(map, pair, tau));
                views.push((pair, tau));
                if let Some(x) = complete(model, map, &trial, &views, cfg, false)? {
                    fix = trial;
                    incumbent = x;
                    continue 'round;
                }
                views.pop();
            }
        }
        return Ok(Some(incumbent));
    }
}

/// Extends view fixings to every binary except the hull indicators, picks
/// the most separating hull plane per step from one relaxation, and
/// re-solves. With `search`, falls back to a short depth-first search over
/// the hull indicators alone.
fn complete(
    model: &Model,
    map: &VarMap,
    fix: &[(VarId, f64)],
    views: &[(usize, usize)],
    cfg: &PlanningConfig,
    search: bool,
) -> Result<Option<Vec<f64>>> {
    let mut m = model.clone();
    let mut fixed = vec![false; model.num_vars()];
    for &(v, val) in fix {
        m.set_bounds(v, val, val);
        fixed[v.0] = true;
    }
    for tau in 0..map.horizon {
        if !map.omega[tau].iter().any(|w| fixed[w.0]) {
            // Hold the orientation of the nearest committed view.
            let k = views
                .iter()
                .min_by_key(|&&(_, t)| t.abs_diff(tau))
                .map_or(0, |&(pair, _)| map.pairs[pair].1);
            for (kk, &w) in map.omega[tau].iter().enumerate() {
                let val = if kk == k { 1.0 } else { 0.0 };
                m.set_bounds(w, val, val);
            }
        }
    }
    let rest = map
        .gamma
        .iter()
        .chain(&map.psi)
        .chain(&map.z)
        .flatten()
        .copied()
        .chain(map.psi_face.iter().flatten().flatten().copied());
    for v in rest {
        if !fixed[v.0] {
            // Off, unless compile already pinned the indicator on.
            let lb = model.var(v).lb;
            m.set_bounds(v, lb, lb);
        }
    }

    let r = miqp::solve_relaxation(&m)?;
    if r.status != RelaxStatus::Optimal {
        return Ok(None);
    }
    let mut polished = m.clone();
    for ot in &map.o {
        // The avoid rows read α_j p + M o_j ≥ β_j + ε: the plane with the
        // largest slack at o = 0 is the natural separator.
        let slack = |j: usize| {
            let row = m.rows.iter().find(|row| row.terms.iter().any(|&(v, _)| v == ot[j])).expect("avoid row");
            row.terms.iter().filter(|&&(v, _)| v != ot[j]).map(|&(v, a)| a * r.x[v.0]).sum::<f64>() - row.rhs
        };
        // Planes pinned to 1 cannot separate anything in the position box.
        let Some(best) = (0..ot.len())
            .filter(|&j| model.var(ot[j]).lb < 1.0)
            .max_by(|&a, &b| slack(a).total_cmp(&slack(b)))
        else {
            return Ok(None);
        };
        for &v in ot {
            let val = if v == ot[best] { 0.0 } else { 1.0 };
            polished.set_bounds(v, val, val);
        }
    }
    let p = miqp::solve_relaxation(&polished)?;
    if p.status == RelaxStatus::Optimal && model.max_violation(&p.x) <= cfg.solver.feas_tol {
        return Ok(Some(p.x));
    }
    if !search {
        return Ok(None);
    }
    let search = SolverConfig {
        node_selection: NodeSelection::DepthFirst,
        root_dive: true,
        node_limit: Some(cfg.heuristic.finish_nodes),
        gap_limit: None,
        time_limit: None,
        ..cfg.solver.clone()
    };
    let sol = miqp::solve_bb(&m, &search)?;
    Ok(sol.is_feasible().then_some(sol.values))
}

/// Decoded plan.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlanSolution {
    pub u: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub positions: Vec<Vector3<f64>>,
    /// `γ[i][τ]`.
    pub gamma: Vec<Vec<bool>>,
    /// Active catalog index per step.
    pub orientation: Vec<usize>,
    /// `ξ_i(τ)` for `τ = 0..=N`.
    pub xi: Vec<Vec<f64>>,
    pub objective: f64,
    pub status: Status,
    pub gap: f64,
    pub nodes: u64,
    pub stats: SolveStats,
}

impl PlanSolution {
    /// Weighted inspection value `Σ r_i ξ_i(N)`.
    pub fn reward(&self, rewards: &[f64]) -> f64 {
        self.xi.iter().zip(rewards).map(|(x, r)| r * x[x.len() - 1]).sum()
    }
}

/// Turns a solver result into a plan, checking the structural invariants.
pub fn decode(sol: &Solution, map: &VarMap, backface: &[Vec<bool>], h: [usize; 3], int_tol: f64) -> Result<PlanSolution> {
    if !sol.is_feasible() {
        return Err(Error::Plan(format!("no plan to decode (status {:?})", sol.status)));
    }
    let val = |v: VarId| sol.values[v.0];
    let bit = |v: VarId| -> Result<bool> {
        let x = val(v);
        if (x - x.round()).abs() > int_tol {
            return Err(Error::Plan(format!("binary column {} at {x}", v.0)));
        }
        Ok(x > 0.5)
    };
    let n = map.horizon;
    let u: Vec<DVector<f64>> = map.u.iter().map(|r| DVector::from_iterator(r.len(), r.iter().map(|&v| val(v)))).collect();
    let y: Vec<DVector<f64>> = map.y.iter().map(|r| DVector::from_iterator(r.len(), r.iter().map(|&v| val(v)))).collect();
    let mut orientation = Vec::with_capacity(n);
    for tau in 0..n {
        let active: Vec<usize> =
            map.omega[tau].iter().enumerate().filter_map(|(k, &v)| bit(v).map(|b| b.then_some(k)).transpose()).collect::<Result<_>>()?;
        if active.len() != 1 {
            return Err(Error::Plan(format!("step {tau} selects {} orientations", active.len())));
        }
        orientation.push(active[0]);
    }
    let mut gamma = Vec::with_capacity(map.gamma.len());
    for (i, gs) in map.gamma.iter().enumerate() {
        let mut row = Vec::with_capacity(n);
        for (tau, &g) in gs.iter().enumerate() {
            let on = bit(g)?;
            if on {
                let k = orientation[tau];
                let pair = map.pairs.iter().position(|&pr| pr == (i, k));
                let ok = pair.is_some_and(|pi| bit(map.psi[pi][tau]).unwrap_or(false)) && backface[i][map.orientations[k]];
                if !ok {
                    return Err(Error::Plan(format!("target {i} claimed at step {tau} without an admissible view")));
                }
            }
            row.push(on);
        }
        gamma.push(row);
    }
    let xi = map.xi.iter().map(|r| r.iter().map(|&v| val(v)).collect()).collect();
    Ok(PlanSolution {
        positions: y.iter().map(|y| Vector3::new(y[h[0]], y[h[1]], y[h[2]])).collect(),
        u,
        y,
        gamma,
        orientation: orientation.into_iter().map(|k| map.orientations[k]).collect(),
        xi,
        objective: sol.objective,
        status: sol.status,
        gap: sol.gap,
        nodes: sol.nodes,
        stats: sol.stats.clone(),
    })
}
