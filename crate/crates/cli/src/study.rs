//! Monte-Carlo study of back-face elimination against FOV size (`eval-bfe`).
//!
//! Each trial draws a target subset and a start pose, then flies the same
//! mission for every FOV size and BFE mode. Every inspection the mission
//! accepts is adjudicated by ray tracing from the executed camera position.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use inspect_core::geometry::{ray_visible, FovPyramid, InspectionScene, TargetSet};
use nalgebra::Vector3;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::{ChaCha20Rng, ChaCha8Rng};
use serde::{Deserialize, Serialize};

use crate::collect::Plant;
use crate::config::ExperimentConfig;
use crate::run::fly;

/// Attempts at drawing a start position outside the hull.
const START_DRAWS: usize = 10_000;

/// One mission of the study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub fov_w: f64,
    pub fov_h: f64,
    pub bfe: bool,
    pub trial: usize,
    pub trial_seed: u64,
    pub targets: usize,
    pub start_x: f64,
    pub start_y: f64,
    pub start_z: f64,
    pub steps: usize,
    pub completed: bool,
    /// Targets whose inspection the mission accepted.
    pub inspected: usize,
    /// Of those, the ones ray-visible at the inspection instant.
    pub visible: usize,
    /// `100 · visible / inspected`; empty when nothing was inspected.
    pub percentage: Option<f64>,
    pub discrepancies: usize,
    /// Set when the mission aborted; the row is then left out of the means.
    pub error: Option<String>,
    pub config_hash: String,
    pub seed: u64,
}

/// Mean and standard error per (FOV size, BFE mode).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub fov_w: f64,
    pub fov_h: f64,
    pub bfe: bool,
    pub trials: usize,
    /// Trials with at least one inspection and no abort.
    pub counted: usize,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BfeStudyResult {
    pub config_hash: String,
    pub seed: u64,
    pub groups: Vec<GroupStats>,
    pub rows: Vec<TrialRow>,
}

impl BfeStudyResult {
    pub fn group(&self, fov_w: f64, bfe: bool) -> Option<&GroupStats> {
        self.groups.iter().find(|g| g.fov_w == fov_w && g.bfe == bfe)
    }
}

/// Seed of trial `k`: word `k` of the ChaCha20 stream keyed by the master
/// seed, so a trial's draws do not depend on which other trials run.
pub fn trial_seed(master: u64, k: usize) -> u64 {
    let mut rng = ChaCha20Rng::seed_from_u64(master);
    rng.set_stream(k as u64);
    rng.next_u64()
}

/// Position drawn uniformly from `bounds`, rejected until it is at least
/// `clearance` outside the hull.
pub fn draw_start(rng: &mut impl Rng, bounds: &[[f64; 2]; 3], scene: &InspectionScene, clearance: f64) -> Result<[f64; 3]> {
    for _ in 0..START_DRAWS {
        let p = [0, 1, 2].map(|a| rng.gen_range(bounds[a][0]..=bounds[a][1]));
        if scene.hull.clearance(&Vector3::from(p)) >= clearance {
            return Ok(p);
        }
    }
    bail!("no start position {clearance} m outside the hull in {bounds:?}")
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Runs the study; `progress` sees every row as it is produced.
pub fn run_study(cfg: &ExperimentConfig, progress: &mut dyn FnMut(&TrialRow)) -> Result<BfeStudyResult> {
    cfg.validate()?;
    let plant = Plant::load(cfg)?;
    let base = cfg.scene()?;
    let pool = cfg.target_pool(&base.mesh)?;
    let st = &cfg.study;
    let tag = cfg.tag();

    let mut rows = Vec::new();
    for trial in 0..st.trials {
        let seed = trial_seed(cfg.seed, trial);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let count = rng.gen_range(st.target_count.0..=st.target_count.1).min(pool.len());
        let targets = TargetSet::sample(&pool, count, cfg.scene.reward_range, &mut rng)?;
        let scene = base.with_targets(targets);
        let start = draw_start(&mut rng, &st.start_box, &scene, st.start_clearance)?;
        let x0 = plant.start_state(start, cfg.quadrotor.ts, true);

        for &(w, h) in &st.sweep {
            let catalog = cfg.fov.catalog(FovPyramid { w, h })?;
            for &bfe in &st.modes {
                let mut row = TrialRow {
                    fov_w: w,
                    fov_h: h,
                    bfe,
                    trial,
                    trial_seed: seed,
                    targets: count,
                    start_x: start[0],
                    start_y: start[1],
                    start_z: start[2],
                    steps: 0,
                    completed: false,
                    inspected: 0,
                    visible: 0,
                    percentage: None,
                    discrepancies: 0,
                    error: None,
                    config_hash: tag.config_hash.clone(),
                    seed: cfg.seed,
                };
                match fly(cfg, &plant, &scene, &catalog, bfe, &x0, st.max_steps, None) {
                    Ok((state, summary)) => {
                        for rec in &state.trace {
                            for ev in rec.gamma_events.iter().filter(|e| e.first) {
                                row.inspected += 1;
                                if ray_visible(&scene.mesh, &Vector3::from(rec.position), ev.facet) {
                                    row.visible += 1;
                                }
                            }
                        }
                        row.steps = summary.steps;
                        row.completed = summary.completed;
                        row.discrepancies = summary.discrepancies;
                        if row.inspected > 0 {
                            row.percentage = Some(100.0 * row.visible as f64 / row.inspected as f64);
                        }
                    }
                    Err(e) => row.error = Some(e.to_string()),
                }
                progress(&row);
                rows.push(row);
            }
        }
    }

    let mut groups = Vec::new();
    for &(w, h) in &st.sweep {
        for &bfe in &st.modes {
            let sel: Vec<&TrialRow> = rows.iter().filter(|r| r.fov_w == w && r.bfe == bfe).collect();
            let xs: Vec<f64> = sel.iter().filter(|r| r.error.is_none()).filter_map(|r| r.percentage).collect();
            let (mean, stderr) = mean_stderr(&xs);
            groups.push(GroupStats { fov_w: w, fov_h: h, bfe, trials: sel.len(), counted: xs.len(), mean, stderr });
        }
    }
    Ok(BfeStudyResult { config_hash: tag.config_hash, seed: cfg.seed, groups, rows })
}

/// Paths written by `eval-bfe`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StudyOutput {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub result: BfeStudyResult,
}

/// Runs the study and writes `study.csv` (one row per mission) and
/// `study.json` (groups and rows).
pub fn cmd_eval_bfe(cfg: &ExperimentConfig, progress: &mut dyn FnMut(&TrialRow)) -> Result<StudyOutput> {
    let result = run_study(cfg, progress)?;
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let csv_path = dir.join("study.csv");
    let mut w = csv::Writer::from_path(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?;
    for row in &result.rows {
        w.serialize(row)?;
    }
    w.flush()?;
    let json_path = dir.join("study.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&result)?)?;
    Ok(StudyOutput { csv: csv_path, json: json_path, result })
}
