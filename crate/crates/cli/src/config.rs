//! Experiment configuration: one JSON file, every key optional.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use inspect_core::assets;
use inspect_core::geometry::{load_mesh, parse_off, FovCatalog, FovPyramid, InspectionScene, TargetSet, TriMesh};
use inspect_core::lti::QuadrotorParams;
use inspect_core::mission::RunTag;
use inspect_core::planner::PlanningConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Prefix naming a scene shipped inside the binary instead of a file.
pub const BUNDLED: &str = "bundled:";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed: data collection, target sampling and start poses.
    pub seed: u64,
    pub quadrotor: QuadrotorParams,
    pub planning: PlanningConfig,
    pub scene: SceneConfig,
    pub fov: FovConfig,
    pub data: DataConfig,
    pub mission: MissionParams,
    pub study: StudyConfig,
    pub oracle: OracleConfig,
    /// Back-face elimination for `run`; the study always runs its own modes.
    pub bfe: bool,
    /// Directory for traces, summaries and study tables.
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 7,
            quadrotor: QuadrotorParams::default(),
            planning: PlanningConfig::default(),
            scene: SceneConfig::default(),
            fov: FovConfig::default(),
            data: DataConfig::default(),
            mission: MissionParams::default(),
            study: StudyConfig::default(),
            oracle: OracleConfig::default(),
            bfe: true,
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    /// OFF/STL path or `bundled:desk_cube` / `bundled:desk_pillar`.
    pub mesh: String,
    /// Targets JSON path, `bundled:desk_targets`, or empty for none.
    pub targets: String,
    pub reward_range: (f64, f64),
    /// Facets the study may draw targets from; empty means the mesh's
    /// `target_pool` metadata, or every facet.
    pub target_pool: Vec<usize>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            mesh: format!("{BUNDLED}desk_cube"),
            targets: format!("{BUNDLED}desk_targets"),
            reward_range: (1.0, 20.0),
            target_pool: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FovConfig {
    pub pyramid: FovPyramid,
    pub theta_z: Vec<f64>,
    pub theta_y: Vec<f64>,
}

impl Default for FovConfig {
    fn default() -> Self {
        FovConfig { pyramid: FovPyramid::default(), theta_z: assets::desk_theta_z(), theta_y: assets::desk_theta_y() }
    }
}

impl FovConfig {
    pub fn catalog(&self, pyramid: FovPyramid) -> Result<FovCatalog> {
        Ok(FovCatalog::grid(pyramid, &self.theta_z, &self.theta_y)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Written by `collect`, read by every other command.
    pub path: PathBuf,
    /// Collection length; `None` means the minimum `(m+1)(L+n)-1`.
    pub length: Option<usize>,
    /// Excitation order; `None` means `L + n`.
    pub order: Option<usize>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { path: PathBuf::from("data/collect.json"), length: None, order: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MissionParams {
    /// Start position; velocities and attitude start at zero.
    pub start: [f64; 3],
    pub max_steps: usize,
}

impl Default for MissionParams {
    fn default() -> Self {
        MissionParams { start: [10.0, 10.0, 1.0], max_steps: 60 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub trials: usize,
    /// FOV sizes `(W, H)`. With the desk grid, back-face elimination only
    /// certifies visibility while `W < H` (corner half-angle below 35.26°).
    pub sweep: Vec<(f64, f64)>,
    /// Inclusive range of the per-trial target count.
    pub target_count: (usize, usize),
    /// BFE settings to run per trial.
    pub modes: Vec<bool>,
    pub max_steps: usize,
    /// Box the start position is drawn from, `[lo, hi]` per axis.
    pub start_box: [[f64; 2]; 3],
    /// Required distance of a start position from the hull [m].
    pub start_clearance: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        // Base width grows at fixed depth, inside the aperture bound.
        let h = FovPyramid::default().h;
        StudyConfig {
            trials: 10,
            sweep: vec![(4.0, h), (5.0, h), (6.0, h)],
            target_count: (2, 6),
            modes: vec![true, false],
            max_steps: 40,
            start_box: [[-6.0, 14.0], [-10.0, 10.0], [1.0, 10.0]],
            start_clearance: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub instances: usize,
    pub horizon: usize,
    pub targets: usize,
    pub orientations: usize,
    /// Agreement tolerance on objectives.
    pub tol: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { instances: 1, horizon: 3, targets: 1, orientations: 2, tol: 1e-6 }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.quadrotor.validate()?;
        self.planning.validate()?;
        let s = &self.study;
        if s.trials < 1 {
            bail!("study.trials must be at least 1");
        }
        if s.sweep.is_empty() {
            bail!("study.sweep must not be empty");
        }
        if s.modes.is_empty() {
            bail!("study.modes must not be empty");
        }
        if s.target_count.0 > s.target_count.1 {
            bail!("study.target_count {:?} is empty", s.target_count);
        }
        if self.mission.max_steps < 1 || s.max_steps < 1 {
            bail!("max_steps must be at least 1");
        }
        if !(self.scene.reward_range.0 <= self.scene.reward_range.1) {
            bail!("scene.reward_range {:?} is empty", self.scene.reward_range);
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn tag(&self) -> RunTag {
        RunTag { config_hash: self.hash(), seed: self.seed }
    }

    pub fn mesh(&self) -> Result<TriMesh> {
        let spec = &self.scene.mesh;
        match spec.strip_prefix(BUNDLED) {
            Some("desk_cube") => Ok(parse_off(assets::DESK_CUBE_OFF)?),
            Some("desk_pillar") => Ok(parse_off(assets::DESK_PILLAR_OFF)?),
            Some(other) => bail!("unknown bundled mesh {other:?}"),
            None => load_mesh(Path::new(spec)).with_context(|| format!("loading mesh {spec}")),
        }
    }

    pub fn targets(&self) -> Result<TargetSet> {
        let spec = &self.scene.targets;
        match spec.strip_prefix(BUNDLED) {
            _ if spec.is_empty() => Ok(TargetSet::default()),
            Some("desk_targets") => Ok(assets::desk_targets()),
            Some(other) => bail!("unknown bundled targets {other:?}"),
            None => TargetSet::load(Path::new(spec)).with_context(|| format!("loading targets {spec}")),
        }
    }

    /// Mesh plus the configured targets, validated.
    pub fn scene(&self) -> Result<InspectionScene> {
        let mesh = self.mesh()?;
        let targets = self.targets()?;
        targets.validate(&mesh, self.scene.reward_range)?;
        Ok(InspectionScene::new(mesh, targets)?)
    }

    /// Facets targets may be drawn from.
    pub fn target_pool(&self, mesh: &TriMesh) -> Result<Vec<usize>> {
        let pool = if !self.scene.target_pool.is_empty() {
            self.scene.target_pool.clone()
        } else if let Some(text) = mesh.metadata.get("target_pool") {
            parse_pool(text)?
        } else {
            (0..mesh.len()).collect()
        };
        if let Some(&bad) = pool.iter().find(|&&f| f >= mesh.len()) {
            bail!("target pool facet {bad} outside mesh of {}", mesh.len());
        }
        Ok(pool)
    }
}

/// `"0-11"` or `"1, 4, 6-8"`.
fn parse_pool(text: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => out.extend(a.trim().parse::<usize>()?..=b.trim().parse::<usize>()?),
            None => out.push(part.parse()?),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_default() {
        let cfg: ExperimentConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"sed": 3}"#).is_err());
    }

    #[test]
    fn pools() {
        assert_eq!(parse_pool("0-3").unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(parse_pool("1, 4, 6-7").unwrap(), vec![1, 4, 6, 7]);
        let mut cfg = ExperimentConfig::default();
        cfg.scene.mesh = "bundled:desk_pillar".into();
        let mesh = cfg.mesh().unwrap();
        assert_eq!(cfg.target_pool(&mesh).unwrap(), (0..12).collect::<Vec<_>>());
    }

    #[test]
    fn study_sweep_widens_inside_the_aperture_bound() {
        let s = StudyConfig::default();
        assert_eq!(s.sweep.len(), 3);
        assert!(s.sweep.windows(2).all(|p| p[0].0 < p[1].0 && p[0].1 == p[1].1));
        for &(w, h) in &s.sweep {
            let corner = (w / (2f64.sqrt() * h)).atan().to_degrees();
            assert!(corner < 90.0 - (1.0 / 3f64.sqrt()).acos().to_degrees(), "W = {w}: {corner}°");
        }
    }

    #[test]
    fn rejects_empty_sweep() {
        let mut cfg = ExperimentConfig::default();
        cfg.study.sweep.clear();
        assert!(cfg.validate().is_err());
    }
}
