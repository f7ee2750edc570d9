//! Shared fixtures: the default plant, its offline data and small planning
//! problems on the desk cube.
#![allow(dead_code)]

use inspect_core::assets;
use inspect_core::excitation::{collect, generate_pe_input, required_length, split_blocks, DataSequence, HankelBlocks, RANK_TOL};
use inspect_core::geometry::{backface_table, FovCatalog, FovPyramid, InspectionScene, Target, TargetSet};
use inspect_core::lti::{build_quadrotor, LtiSystem, QuadrotorParams};
use inspect_core::mission::{warm_up, MissionState};
use inspect_core::planner::{compile, PlanInputs, PlanningConfig, VarMap};
use miqp::{Model, SolverConfig};
use nalgebra::{DVector, Vector3};

pub const SEED: u64 = 11;

pub struct Fixture {
    pub params: QuadrotorParams,
    pub sys: LtiSystem,
    pub data: DataSequence,
}

/// Default plant with data of the minimum length for `K = 1, N = 8`.
pub fn fixture() -> Fixture {
    let params = QuadrotorParams::default();
    let sys = build_quadrotor(&params).unwrap();
    let l = 9;
    let t = required_length(sys.m(), sys.n(), l);
    let u = generate_pe_input(&params.input_bounds(), t, l + sys.n(), SEED, RANK_TOL).unwrap();
    let data = collect(&sys, &u).unwrap();
    Fixture { params, sys, data }
}

impl Fixture {
    pub fn blocks(&self, k: usize, n: usize) -> HankelBlocks {
        split_blocks(&self.data, k, n, self.sys.n()).unwrap()
    }

    /// State that stays at `p` under zero input.
    pub fn hold(&self, p: Vector3<f64>) -> DVector<f64> {
        let mut x = DVector::zeros(self.sys.n());
        for (a, &i) in self.sys.h.iter().enumerate() {
            x[i] = p[a];
            x[i + 1] = p[a] / self.params.ts;
        }
        x
    }
}

/// Search settings that run to proven optimality.
pub fn exact() -> SolverConfig {
    SolverConfig { rel_gap: 1e-10, gap_limit: None, node_limit: None, time_limit: None, ..SolverConfig::default() }
}

pub fn scene(facets: &[(usize, f64)]) -> InspectionScene {
    let targets = TargetSet { targets: facets.iter().map(|&(f, r)| Target { facet_index: f, reward: r }).collect() };
    InspectionScene::new(assets::desk_cube(), targets).unwrap()
}

pub fn catalog() -> FovCatalog {
    assets::desk_catalog(FovPyramid::default()).unwrap()
}

/// One planning problem: a scene, a catalog and the loop state it starts from.
pub struct Problem {
    pub scene: InspectionScene,
    pub catalog: FovCatalog,
    pub backface: Vec<Vec<bool>>,
    pub blocks: HankelBlocks,
    pub state: MissionState,
}

impl Problem {
    pub fn new(fx: &Fixture, scene: InspectionScene, start: Vector3<f64>, k: usize, n: usize) -> Problem {
        let catalog = catalog();
        let backface = backface_table(&scene.mesh, &scene.targets, &catalog);
        let state = warm_up(&fx.sys, k, &fx.hold(start), scene.targets.len()).unwrap();
        Problem { scene, catalog, backface, blocks: fx.blocks(k, n), state }
    }

    pub fn compile(&self, fx: &Fixture, cfg: &PlanningConfig) -> (Model, VarMap) {
        let inp = PlanInputs {
            blocks: &self.blocks,
            u_past: &self.state.u_window,
            y_past: &self.state.y_window,
            memory: &self.state.memory,
            carry: &self.state.carry,
            catalog: &self.catalog,
            backface: &self.backface,
            scene: &self.scene,
            h: fx.sys.h,
        };
        compile(cfg, &inp).unwrap()
    }
}

/// Hovering 4 m back along the (1, 1, -1) diagonal from the centroid of
/// top facet 3, which desk orientation 1 looks along.
pub fn above_top() -> Vector3<f64> {
    let c = assets::desk_cube().centroids[3];
    c - 4.0 * Vector3::new(1.0, 1.0, -1.0).normalize()
}
