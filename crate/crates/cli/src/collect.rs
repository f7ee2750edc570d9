//! Offline data: generation (`collect`) and loading for the other commands.

use std::path::PathBuf;

use anyhow::{bail, ensure, Context, Result};
use inspect_core::excitation::{
    collect, generate_pe_input, is_persistently_exciting, required_length, split_blocks, DataFile, DataSequence,
    HankelBlocks, RANK_TOL,
};
use inspect_core::lti::{build_quadrotor, LtiSystem};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

/// What `collect` wrote.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollectReport {
    pub path: PathBuf,
    #[serde(rename = "T")]
    pub t: usize,
    pub order: usize,
    pub config_hash: String,
    pub seed: u64,
}

/// Generates a persistently exciting input, simulates the plant from hover
/// and writes the data file named in the config.
pub fn cmd_collect(cfg: &ExperimentConfig) -> Result<CollectReport> {
    cfg.validate()?;
    let sys = build_quadrotor(&cfg.quadrotor)?;
    let l = cfg.planning.k + cfg.planning.horizon;
    let order = cfg.data.order.unwrap_or(l + sys.n());
    let t = cfg.data.length.unwrap_or_else(|| required_length(sys.m(), sys.n(), l));
    let u = generate_pe_input(&cfg.quadrotor.input_bounds(), t, order, cfg.seed, RANK_TOL)?;
    ensure!(is_persistently_exciting(&u, order, RANK_TOL), "input lost excitation of order {order}");
    let data = collect(&sys, &u)?;
    let file = DataFile::new(&data, cfg.seed, order, cfg.hash());

    let path = cfg.data.path.clone();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(&path, serde_json::to_vec(&file)?).with_context(|| format!("writing {}", path.display()))?;
    Ok(CollectReport { path, t, order, config_hash: file.config_hash, seed: cfg.seed })
}

/// The true plant and the data-driven model built from the collected file.
pub struct Plant {
    pub sys: LtiSystem,
    pub data: DataSequence,
    pub blocks: HankelBlocks,
}

impl Plant {
    pub fn load(cfg: &ExperimentConfig) -> Result<Plant> {
        let path = &cfg.data.path;
        if !path.exists() {
            bail!("data file {} not found; run `collect` with the same config first", path.display());
        }
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: DataFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let sys = build_quadrotor(&cfg.quadrotor)?;
        let data = file.to_sequence()?;
        let blocks = split_blocks(&data, cfg.planning.k, cfg.planning.horizon, sys.n())?;
        Ok(Plant { sys, data, blocks })
    }

    /// State at position `p` with zero attitude. With `hold` the velocity is
    /// set so that the plant stays at `p` under zero input (its position
    /// rows read `Ts` times velocity); otherwise it starts at rest.
    pub fn start_state(&self, p: [f64; 3], ts: f64, hold: bool) -> DVector<f64> {
        let mut x = DVector::zeros(self.sys.n());
        for (a, &i) in self.sys.h.iter().enumerate() {
            x[i] = p[a];
            if hold {
                x[i + 1] = p[a] / ts;
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hold_start_stays_put() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::default();
        cfg.data.path = dir.path().join("d.json");
        cmd_collect(&cfg).unwrap();
        let plant = Plant::load(&cfg).unwrap();
        let x0 = plant.start_state([3.0, -2.0, 5.0], cfg.quadrotor.ts, true);
        let sim = plant.sys.simulate(&x0, &vec![DVector::zeros(4); 3]).unwrap();
        for y in &sim.outputs {
            assert!((plant.sys.position(y) - nalgebra::Vector3::new(3.0, -2.0, 5.0)).norm() < 1e-12);
        }
    }
}
