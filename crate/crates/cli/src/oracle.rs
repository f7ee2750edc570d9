//! Cross-checks on shrunk planning problems (`oracle-check`) and model
//! export for external solvers (`export-mps`).

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use inspect_core::excitation::split_blocks;
use inspect_core::geometry::{backface_table, FovCatalog, InspectionScene, TargetSet};
use inspect_core::mission::{warm_up, MissionState};
use inspect_core::planner::{compile, decode, PlanInputs, PlanSolution, PlanningConfig, VarMap};
use miqp::{mps, solve_bb, solve_enumerate, Model, SolverConfig, Status, VarKind, ENUMERATION_CAP};
use nalgebra::{DVector, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::collect::Plant;
use crate::config::ExperimentConfig;
use crate::study::trial_seed;

/// Tolerance of the one-step-ahead DeePC exactness check.
pub const PREDICTION_TOL: f64 = 1e-5;
/// Slack on re-checked collision margins and objective recomputations.
const CHECK_TOL: f64 = 1e-6;

/// A compiled planning problem together with what it was built from.
pub struct TinyInstance {
    pub model: Model,
    pub map: VarMap,
    pub planning: PlanningConfig,
    pub scene: InspectionScene,
    pub catalog: FovCatalog,
    pub backface: Vec<Vec<bool>>,
    pub state: MissionState,
}

pub fn free_binaries(model: &Model) -> usize {
    model.vars.iter().filter(|v| v.kind == VarKind::Binary && v.lb < v.ub).count()
}

/// Builds instance `index`: random targets from the pool, an orientation
/// subset that contains an admissible view of the first target, a hover
/// start a few metres back along that view, and random memory. The
/// horizon shrinks from the configured value until enumeration is
/// affordable.
pub fn tiny_instance(cfg: &ExperimentConfig, plant: &Plant, index: usize) -> Result<TinyInstance> {
    let oc = &cfg.oracle;
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(cfg.seed ^ 0x6f72_6163_6c65, index));
    let base = cfg.scene()?;
    let pool = cfg.target_pool(&base.mesh)?;
    let targets = TargetSet::sample(&pool, oc.targets.min(pool.len()), cfg.scene.reward_range, &mut rng)?;
    let scene = base.with_targets(targets);
    let full = cfg.fov.catalog(cfg.fov.pyramid)?;
    let table = backface_table(&scene.mesh, &scene.targets, &full);

    let mut order: Vec<usize> = (0..full.len()).collect();
    order.shuffle(&mut rng);
    if let Some(first) = table.first() {
        // An admissible orientation of target 0 goes first.
        if let Some(pos) = order.iter().position(|&k| first[k]) {
            order.swap(0, pos);
        }
    }
    order.truncate(oc.orientations.max(1).min(full.len()));

    let start = match scene.targets.targets.first() {
        Some(t) => {
            // Back along the admissible viewing axis, jittered so that
            // some instances need motion to see the target.
            let c = scene.mesh.centroids[t.facet_index];
            let axis = full.orientations[order[0]].view_dir.normalize();
            let mut found = None;
            for _ in 0..1000 {
                let jitter = Vector3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
                let p = c - axis * rng.gen_range(2.0..6.0) + jitter;
                if scene.hull.clearance(&p) >= 1.0 {
                    found = Some([p.x, p.y, p.z]);
                    break;
                }
            }
            found.context("no start position in front of the target")?
        }
        None => crate::study::draw_start(&mut rng, &cfg.study.start_box, &scene, 1.0)?,
    };
    let x0 = plant.start_state(start, cfg.quadrotor.ts, true);
    let mut state = warm_up(&plant.sys, cfg.planning.k, &x0, scene.targets.len())?;
    for i in 0..scene.targets.len() {
        if rng.gen_bool(0.25) {
            state.memory[i] = true;
            state.carry[i] = 1.0;
        }
    }

    let mut horizon = oc.horizon;
    while horizon >= 1 {
        let planning = PlanningConfig {
            horizon,
            orientations: order.clone(),
            pin_redundant_faces: true,
            ..cfg.planning.clone()
        };
        let blocks = split_blocks(&plant.data, planning.k, horizon, plant.sys.n())?;
        let inp = PlanInputs {
            blocks: &blocks,
            u_past: &state.u_window,
            y_past: &state.y_window,
            memory: &state.memory,
            carry: &state.carry,
            catalog: &full,
            backface: &table,
            scene: &scene,
            h: plant.sys.h,
        };
        let (model, map) = compile(&planning, &inp)?;
        if free_binaries(&model) <= ENUMERATION_CAP {
            return Ok(TinyInstance { model, map, planning, scene, catalog: full, backface: table, state });
        }
        horizon -= 1;
    }
    bail!("instance {index} keeps more than {ENUMERATION_CAP} free binaries at horizon 1")
}

/// Planner invariants re-checked on a decoded plan. Returns the violations.
pub fn check_plan(inst: &TinyInstance, plant: &Plant, plan: &PlanSolution) -> Vec<String> {
    let mut bad = Vec::new();
    let eps = inst.planning.epsilon;
    for (tau, p) in plan.positions.iter().enumerate() {
        let fov = &inst.catalog.orientations[plan.orientation[tau]];
        for (i, claims) in plan.gamma.iter().enumerate() {
            if !claims[tau] {
                continue;
            }
            let facet = inst.scene.targets.targets[i].facet_index;
            if !inst.backface[i][plan.orientation[tau]] {
                bad.push(format!("target {i} claimed at step {tau} through a back face"));
            }
            if !fov.sees(p, &inst.scene.mesh.centroids[facet]) {
                bad.push(format!("target {i} claimed at step {tau} outside the FOV"));
            }
        }
        if inst.scene.hull.clearance(p) < eps - CHECK_TOL {
            bad.push(format!("step {tau} position {p:?} inside the hull margin"));
        }
    }
    let sim = match plant.sys.simulate(&inst.state.x, &plan.u) {
        Ok(s) => s,
        Err(e) => return vec![e.to_string()],
    };
    for (tau, (y, yp)) in sim.outputs.iter().zip(&plan.y).enumerate() {
        let err = (y - yp).amax();
        if err > PREDICTION_TOL {
            bad.push(format!("step {tau} prediction error {err:e}"));
        }
    }
    for (i, xi) in plan.xi.iter().enumerate() {
        let end = xi[xi.len() - 1];
        let claims = plan.gamma[i].iter().filter(|&&g| g).count() as f64;
        if end > 1.0 + CHECK_TOL {
            bad.push(format!("target {i} xi(N) = {end}"));
        }
        if !inst.state.memory[i] && end - inst.state.carry[i] > claims + CHECK_TOL {
            bad.push(format!("target {i} gains {end} from {claims} claims"));
        }
    }
    bad
}

/// Outcome on one instance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InstanceReport {
    pub index: usize,
    pub horizon: usize,
    pub targets: usize,
    pub orientations: usize,
    pub binaries: usize,
    pub free_binaries: usize,
    pub bb_status: Status,
    pub enum_status: Status,
    pub bb_objective: f64,
    pub enum_objective: f64,
    pub difference: f64,
    pub agree: bool,
    pub violations: Vec<String>,
    /// The MPS text re-reads to a model with the same census and objective.
    pub mps_roundtrip: bool,
    pub mps_path: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleReport {
    pub config_hash: String,
    pub seed: u64,
    pub tol: f64,
    pub passed: bool,
    pub instances: Vec<InstanceReport>,
}

/// Exact search settings: no limits and a negligible gap.
pub fn exact_solver(base: &SolverConfig) -> SolverConfig {
    SolverConfig { rel_gap: 1e-10, gap_limit: None, node_limit: None, time_limit: None, ..base.clone() }
}

/// Objectives agree within `tol` relative to `max(1, |enumerated|)`;
/// two infeasible verdicts agree.
pub fn objectives_agree(bb: f64, en: f64, tol: f64) -> bool {
    if bb.is_infinite() || en.is_infinite() {
        return bb == en;
    }
    (bb - en).abs() <= tol * en.abs().max(1.0)
}

fn mps_roundtrip(model: &Model, x: &[f64]) -> bool {
    let Ok(back) = mps::read_mps(&mps::write_mps(model)) else { return false };
    let bins = |m: &Model| m.vars.iter().filter(|v| v.kind == VarKind::Binary).count();
    back.num_vars() == model.num_vars()
        && back.num_rows() == model.num_rows()
        && bins(&back) == bins(model)
        && (x.is_empty() || (back.objective(x) - model.objective(x)).abs() <= 1e-9 * model.objective(x).abs().max(1.0))
}

/// Checks one instance; `dir` receives its MPS text when given.
pub fn check_instance(cfg: &ExperimentConfig, plant: &Plant, index: usize, dir: Option<&std::path::Path>) -> Result<InstanceReport> {
    let inst = tiny_instance(cfg, plant, index)?;
    let solver = exact_solver(&inst.planning.solver);
    let bb = solve_bb(&inst.model, &solver)?;
    let en = solve_enumerate(&inst.model, solver.feas_tol)?;
    let agree = bb.status == Status::Optimal || bb.status == Status::Infeasible;
    let agree = agree && objectives_agree(bb.objective, en.objective, cfg.oracle.tol);
    let mut violations = Vec::new();
    if bb.is_feasible() {
        match decode(&bb, &inst.map, &inst.backface, plant.sys.h, solver.int_tol) {
            Ok(plan) => violations = check_plan(&inst, plant, &plan),
            Err(e) => violations.push(e.to_string()),
        }
    }
    let mps_path = match dir {
        Some(d) => {
            let p = d.join(format!("oracle_{index}.mps"));
            std::fs::write(&p, mps::write_mps(&inst.model)).with_context(|| format!("writing {}", p.display()))?;
            Some(p)
        }
        None => None,
    };
    Ok(InstanceReport {
        index,
        horizon: inst.map.horizon,
        targets: inst.scene.targets.len(),
        orientations: inst.map.orientations.len(),
        binaries: inst.model.vars.iter().filter(|v| v.kind == VarKind::Binary).count(),
        free_binaries: free_binaries(&inst.model),
        bb_status: bb.status,
        enum_status: en.status,
        bb_objective: bb.objective,
        enum_objective: en.objective,
        difference: (bb.objective - en.objective).abs(),
        agree,
        violations,
        mps_roundtrip: mps_roundtrip(&inst.model, &bb.values),
        mps_path,
    })
}

/// Runs `oracle.instances` checks and writes `oracle.json`.
pub fn cmd_oracle_check(cfg: &ExperimentConfig) -> Result<OracleReport> {
    cfg.validate()?;
    let plant = Plant::load(cfg)?;
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let instances =
        (0..cfg.oracle.instances).map(|k| check_instance(cfg, &plant, k, Some(dir))).collect::<Result<Vec<_>>>()?;
    let passed = instances.iter().all(|r| r.agree && r.violations.is_empty() && r.mps_roundtrip);
    let tag = cfg.tag();
    let report = OracleReport { config_hash: tag.config_hash, seed: tag.seed, tol: cfg.oracle.tol, passed, instances };
    std::fs::write(dir.join("oracle.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

/// Paths written by `export-mps`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExportOutput {
    pub mps: PathBuf,
    pub columns: PathBuf,
    pub variables: usize,
    pub binaries: usize,
    pub rows: usize,
}

/// Compiles the first planning problem of the configured mission and writes
/// it as MPS plus the column dump, for solvers beyond desk scale.
pub fn cmd_export_mps(cfg: &ExperimentConfig) -> Result<ExportOutput> {
    cfg.validate()?;
    let plant = Plant::load(cfg)?;
    let scene = cfg.scene()?;
    let catalog = cfg.fov.catalog(cfg.fov.pyramid)?;
    let backface = crate::run::backface(&scene, &catalog, cfg.bfe);
    let x0: DVector<f64> = plant.start_state(cfg.mission.start, cfg.quadrotor.ts, false);
    let state = warm_up(&plant.sys, cfg.planning.k, &x0, scene.targets.len())?;
    let inp = PlanInputs {
        blocks: &plant.blocks,
        u_past: &state.u_window,
        y_past: &state.y_window,
        memory: &state.memory,
        carry: &state.carry,
        catalog: &catalog,
        backface: &backface,
        scene: &scene,
        h: plant.sys.h,
    };
    let (model, map) = compile(&cfg.planning, &inp)?;
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mps_path = dir.join("plan_t0.mps");
    std::fs::write(&mps_path, mps::write_mps(&model))?;
    let columns = dir.join("plan_t0.columns.json");
    std::fs::write(&columns, serde_json::to_string_pretty(&map.columns(&model))?)?;
    Ok(ExportOutput {
        mps: mps_path,
        columns,
        variables: model.num_vars(),
        binaries: model.vars.iter().filter(|v| v.kind == VarKind::Binary).count(),
        rows: model.num_rows(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn agreement_rule() {
        assert!(objectives_agree(-300.0, -300.0001, 1e-6));
        assert!(!objectives_agree(-300.0, -300.01, 1e-6));
        assert!(objectives_agree(f64::INFINITY, f64::INFINITY, 1e-6));
        assert!(!objectives_agree(1.0, f64::INFINITY, 1e-6));
        assert!(objectives_agree(1e-9, 0.0, 1e-6));
    }
}
