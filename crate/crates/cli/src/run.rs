//! Single closed-loop mission (`run`).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{Context, Result};
use inspect_core::geometry::{backface_table, FovCatalog, InspectionScene};
use inspect_core::mission::{run_mission, warm_up, MissionConfig, MissionState, MissionSetup, MissionSummary};
use serde::{Deserialize, Serialize};

use crate::collect::Plant;
use crate::config::ExperimentConfig;

/// Files written by `run` and the summary they hold.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunOutput {
    pub trace: PathBuf,
    pub summary_path: PathBuf,
    pub summary: MissionSummary,
}

/// `b[i][φ]`, or all-true when back-face elimination is off.
pub fn backface(scene: &InspectionScene, catalog: &FovCatalog, bfe: bool) -> Vec<Vec<bool>> {
    if bfe {
        backface_table(&scene.mesh, &scene.targets, catalog)
    } else {
        vec![vec![true; catalog.len()]; scene.targets.len()]
    }
}

/// Runs one mission from `x0`, streaming the trace to `trace` when given.
#[allow(clippy::too_many_arguments)]
pub fn fly(
    cfg: &ExperimentConfig,
    plant: &Plant,
    scene: &InspectionScene,
    catalog: &FovCatalog,
    bfe: bool,
    x0: &nalgebra::DVector<f64>,
    max_steps: usize,
    trace: Option<&mut dyn Write>,
) -> Result<(MissionState, MissionSummary)> {
    let bf = backface(scene, catalog, bfe);
    let mcfg = MissionConfig {
        planning: cfg.planning.clone(),
        max_steps,
        dump_dir: Some(cfg.output_dir.join("dumps")),
        tag: cfg.tag(),
    };
    let setup =
        MissionSetup { sys: &plant.sys, blocks: &plant.blocks, catalog, backface: &bf, scene, cfg: &mcfg };
    let mut state = warm_up(&plant.sys, cfg.planning.k, x0, scene.targets.len())?;
    let summary = run_mission(&mut state, &setup, trace)?;
    Ok((state, summary))
}

/// Mission from the configured start; writes `trace.jsonl` and
/// `summary.json` into the output directory.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let plant = Plant::load(cfg)?;
    let scene = cfg.scene()?;
    let catalog = cfg.fov.catalog(cfg.fov.pyramid)?;
    let x0 = plant.start_state(cfg.mission.start, cfg.quadrotor.ts, false);

    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let trace_path = dir.join("trace.jsonl");
    let mut trace = BufWriter::new(File::create(&trace_path).with_context(|| format!("creating {}", trace_path.display()))?);
    let (_, summary) = fly(cfg, &plant, &scene, &catalog, cfg.bfe, &x0, cfg.mission.max_steps, Some(&mut trace))?;
    trace.flush()?;

    let summary_path = dir.join("summary.json");
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)?;
    Ok(RunOutput { trace: trace_path, summary_path, summary })
}
