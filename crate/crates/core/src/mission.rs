//! Receding-horizon closed loop around the planner.
//!
//! Each step compiles a planning problem from the current past window and
//! inspection memory, solves it, applies the first planned input to the
//! plant and re-checks every claimed inspection at the executed position
//! before it enters the memory.

use std::io::Write;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use miqp::{SolveStats, Status};

use crate::error::{Error, Result};
use crate::excitation::HankelBlocks;
use crate::geometry::{FovCatalog, InspectionScene};
use crate::lti::LtiSystem;
use crate::planner::{compile, decode, greedy_start, PlanInputs, PlanSolution, PlanningConfig, VarMap};

/// Loop settings that are not part of a single planning problem.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct MissionConfig {
    pub planning: PlanningConfig,
    pub max_steps: usize,
    /// Where a failing step writes its model before aborting.
    pub dump_dir: Option<PathBuf>,
    /// Copied into every trace record.
    pub tag: RunTag,
}

impl Default for MissionConfig {
    fn default() -> Self {
        MissionConfig { planning: PlanningConfig::default(), max_steps: 60, dump_dir: None, tag: RunTag::default() }
    }
}

/// Provenance stamped on outputs.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunTag {
    pub config_hash: String,
    pub seed: u64,
}

/// Fixed inputs of a mission.
pub struct MissionSetup<'a> {
    pub sys: &'a LtiSystem,
    pub blocks: &'a HankelBlocks,
    pub catalog: &'a FovCatalog,
    /// Back-face table over the full catalog, `[target][φ]`.
    pub backface: &'a [Vec<bool>],
    pub scene: &'a InspectionScene,
    pub cfg: &'a MissionConfig,
}

/// One claimed inspection at the executed step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaEvent {
    pub target: usize,
    pub facet: usize,
    /// Passed the back-face and FOV re-check at the executed position.
    pub validated: bool,
    /// First validated inspection of this target.
    pub first: bool,
}

/// One line of the trace file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    pub position: [f64; 3],
    /// Catalog index of the active orientation.
    pub orientation: usize,
    pub planned_positions: Vec<[f64; 3]>,
    pub planned_orientations: Vec<usize>,
    pub gamma_events: Vec<GammaEvent>,
    pub memory: Vec<bool>,
    pub objective: f64,
    pub status: Status,
    pub gap: f64,
    pub nodes: u64,
    pub stats: SolveStats,
    /// `max |y_realized - y(t|t)|`.
    pub prediction_error: f64,
    /// Largest signed distance to a hull plane; at least ε when collision-free.
    pub hull_clearance: f64,
    pub config_hash: String,
    pub seed: u64,
}

/// Loop state between steps.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MissionState {
    pub t: usize,
    pub x: DVector<f64>,
    /// Past inputs `m × K`, oldest first.
    pub u_window: DMatrix<f64>,
    /// Past outputs `p × K`.
    pub y_window: DMatrix<f64>,
    pub memory: Vec<bool>,
    pub carry: Vec<f64>,
    pub trace: Vec<StepRecord>,
    pub discrepancies: usize,
    /// Previous solution and its variable map, for the shifted start.
    #[serde(skip)]
    previous: Option<(Vec<f64>, VarMap)>,
}

impl MissionState {
    pub fn done(&self) -> bool {
        self.memory.iter().all(|&m| m)
    }
}

/// Fills the first window with `K` hover (zero-input) steps from `x0`.
pub fn warm_up(sys: &LtiSystem, k: usize, x0: &DVector<f64>, targets: usize) -> Result<MissionState> {
    if k < 1 {
        return Err(Error::InvalidParam("K must be at least 1".into()));
    }
    let zeros = vec![DVector::zeros(sys.m()); k];
    let sim = sys.simulate(x0, &zeros)?;
    Ok(MissionState {
        t: 0,
        x: sim.final_state.clone(),
        u_window: DMatrix::from_columns(&sim.inputs),
        y_window: DMatrix::from_columns(&sim.outputs),
        memory: vec![false; targets],
        carry: vec![0.0; targets],
        trace: Vec::new(),
        discrepancies: 0,
        previous: None,
    })
}

fn abort(setup: &MissionSetup, state: &MissionState, model: &miqp::Model, map: &VarMap, reason: String) -> Error {
    let mut reason = reason;
    if let Some(dir) = &setup.cfg.dump_dir {
        let stem = dir.join(format!("abort_t{}", state.t));
        let written = std::fs::create_dir_all(dir)
            .and_then(|_| std::fs::write(stem.with_extension("mps"), miqp::mps::write_mps(model)))
            .and_then(|_| {
                let cols = serde_json::to_string_pretty(&map.columns(model)).map_err(std::io::Error::other)?;
                std::fs::write(stem.with_extension("columns.json"), cols)
            })
            .and_then(|_| {
                let st = serde_json::to_string_pretty(state).map_err(std::io::Error::other)?;
                std::fs::write(stem.with_extension("state.json"), st)
            });
        match written {
            Ok(()) => reason.push_str(&format!("; model dumped to {}", stem.display())),
            Err(e) => reason.push_str(&format!("; dump failed: {e}")),
        }
    }
    Error::Aborted { step: state.t, reason }
}

/// Runs one receding-horizon step and returns its trace record.
pub fn mission_step(state: &mut MissionState, setup: &MissionSetup) -> Result<StepRecord> {
    let cfg = &setup.cfg.planning;
    let inp = PlanInputs {
        blocks: setup.blocks,
        u_past: &state.u_window,
        y_past: &state.y_window,
        memory: &state.memory,
        carry: &state.carry,
        catalog: setup.catalog,
        backface: setup.backface,
        scene: setup.scene,
        h: setup.sys.h,
    };
    let (model, map) = match compile(cfg, &inp) {
        Ok(c) => c,
        Err(e) => return Err(Error::Aborted { step: state.t, reason: e.to_string() }),
    };

    let mut starts: Vec<Vec<f64>> = Vec::new();
    if cfg.heuristic.enabled {
        if let Some(s) = greedy_start(&model, &map, &state.memory, cfg)? {
            starts.push(s);
        }
    }
    if let Some((values, prev_map)) = &state.previous {
        starts.push(prev_map.shifted_start(values, model.num_vars()));
    }
    let refs: Vec<&[f64]> = starts.iter().map(|s| s.as_slice()).collect();
    let sol = miqp::solve_bb_with_starts(&model, &cfg.solver, &refs)?;
    if !sol.is_feasible() {
        let reason = format!("planner found no feasible plan (status {:?})", sol.status);
        return Err(abort(setup, state, &model, &map, reason));
    }
    let plan: PlanSolution = match decode(&sol, &map, setup.backface, setup.sys.h, 1e-6) {
        Ok(p) => p,
        Err(e) => return Err(abort(setup, state, &model, &map, e.to_string())),
    };

    // Execute u(t|t).
    let u0 = plan.u[0].clone();
    let (x_next, y) = setup.sys.step(&state.x, &u0)?;
    let position = setup.sys.position(&y);
    let prediction_error = (&y - &plan.y[0]).amax();

    // Re-check claimed inspections at the executed position.
    let phi = plan.orientation[0];
    let fov = &setup.catalog.orientations[phi];
    let mut events = Vec::new();
    for (i, claims) in plan.gamma.iter().enumerate() {
        if !claims[0] {
            continue;
        }
        let facet = setup.scene.targets.targets[i].facet_index;
        let centroid = setup.scene.mesh.centroids[facet];
        let validated = setup.backface[i][phi] && fov.sees(&position, &centroid);
        let first = validated && !state.memory[i];
        if validated {
            state.memory[i] = true;
        } else {
            state.discrepancies += 1;
        }
        events.push(GammaEvent { target: i, facet, validated, first });
    }
    // The carried value only ever reaches 1 through a validated inspection;
    // on the exact plant this equals the planned ξ(t+1|t).
    for (c, &m) in state.carry.iter_mut().zip(&state.memory) {
        if m {
            *c = 1.0;
        }
    }

    // Left shift of the past window.
    let k = state.u_window.ncols();
    if k > 1 {
        let u_old = state.u_window.columns(1, k - 1).into_owned();
        let y_old = state.y_window.columns(1, k - 1).into_owned();
        state.u_window.columns_mut(0, k - 1).copy_from(&u_old);
        state.y_window.columns_mut(0, k - 1).copy_from(&y_old);
    }
    state.u_window.set_column(k - 1, &u0);
    state.y_window.set_column(k - 1, &y);

    let arr = |p: &Vector3<f64>| [p.x, p.y, p.z];
    let record = StepRecord {
        t: state.t,
        u: u0.iter().copied().collect(),
        y: y.iter().copied().collect(),
        position: arr(&position),
        orientation: phi,
        planned_positions: plan.positions.iter().map(arr).collect(),
        planned_orientations: plan.orientation.clone(),
        gamma_events: events,
        memory: state.memory.clone(),
        objective: sol.objective,
        status: sol.status,
        gap: sol.gap,
        nodes: sol.nodes,
        stats: sol.stats.clone(),
        prediction_error,
        hull_clearance: setup.scene.hull.clearance(&position),
        config_hash: setup.cfg.tag.config_hash.clone(),
        seed: setup.cfg.tag.seed,
    };
    state.x = x_next;
    state.t += 1;
    state.previous = Some((sol.values, map));
    state.trace.push(record.clone());
    Ok(record)
}

/// Aggregate of a finished (or exhausted) mission.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MissionSummary {
    pub steps: usize,
    pub completed: bool,
    /// Step after which the last target entered the memory.
    pub steps_to_completion: Option<usize>,
    /// `Σ r_i Ξ_i`.
    pub total_reward: f64,
    pub inspected: Vec<bool>,
    pub discrepancies: usize,
    pub max_prediction_error: f64,
    pub min_hull_clearance: f64,
    pub total_nodes: u64,
    pub total_relaxations: u64,
    /// Steps whose solve stopped at each status, in `Status` order.
    pub status_counts: Vec<(Status, usize)>,
    pub config_hash: String,
    pub seed: u64,
}

impl MissionSummary {
    pub fn from_state(state: &MissionState, scene: &InspectionScene, tag: &RunTag) -> Self {
        let mut status_counts: Vec<(Status, usize)> = Vec::new();
        for r in &state.trace {
            match status_counts.iter_mut().find(|(s, _)| *s == r.status) {
                Some((_, c)) => *c += 1,
                None => status_counts.push((r.status, 1)),
            }
        }
        let steps_to_completion = if state.done() {
            Some(state.trace.iter().position(|r| r.memory.iter().all(|&m| m)).map_or(0, |t| t + 1))
        } else {
            None
        };
        MissionSummary {
            steps: state.t,
            completed: state.done(),
            steps_to_completion,
            total_reward: scene.targets.targets.iter().zip(&state.memory).filter(|(_, &m)| m).map(|(t, _)| t.reward).sum(),
            inspected: state.memory.clone(),
            discrepancies: state.discrepancies,
            max_prediction_error: state.trace.iter().map(|r| r.prediction_error).fold(0.0, f64::max),
            min_hull_clearance: state.trace.iter().map(|r| r.hull_clearance).fold(f64::INFINITY, f64::min),
            total_nodes: state.trace.iter().map(|r| r.nodes).sum(),
            total_relaxations: state.trace.iter().map(|r| r.stats.relaxations).sum(),
            status_counts,
            config_hash: tag.config_hash.clone(),
            seed: tag.seed,
        }
    }
}

/// Steps until every target is inspected or `max_steps` is reached,
/// writing one JSON line per step to `trace` when given.
pub fn run_mission(
    state: &mut MissionState,
    setup: &MissionSetup,
    mut trace: Option<&mut dyn Write>,
) -> Result<MissionSummary> {
    let max_steps = setup.cfg.max_steps;
    if max_steps < 1 {
        return Err(Error::InvalidParam("max_steps must be at least 1".into()));
    }
    while !state.done() && state.t < max_steps {
        let record = mission_step(state, setup)?;
        if let Some(w) = trace.as_mut() {
            serde_json::to_writer(&mut **w, &record)?;
            w.write_all(b"\n")?;
        }
    }
    Ok(MissionSummary::from_state(state, setup.scene, &setup.cfg.tag))
}
