//! Scenes bundled with the crate and the desk-scale orientation grid.

use std::f64::consts::PI;

use crate::error::Result;
use crate::geometry::{parse_off, FovCatalog, FovPyramid, TargetSet, TriMesh};

pub const DESK_CUBE_OFF: &str = include_str!("../assets/desk_cube.off");
pub const DESK_PILLAR_OFF: &str = include_str!("../assets/desk_pillar.off");
pub const DESK_TARGETS_JSON: &str = include_str!("../assets/desk_targets.json");

/// 4 m cube, 12 facets, nothing else in the scene.
pub fn desk_cube() -> TriMesh {
    parse_off(DESK_CUBE_OFF).expect("bundled mesh parses")
}

/// The desk cube plus a 6 m pillar standing 2 m in front of its -x face.
pub fn desk_pillar() -> TriMesh {
    parse_off(DESK_PILLAR_OFF).expect("bundled mesh parses")
}

/// Three targets on the desk cube.
pub fn desk_targets() -> TargetSet {
    serde_json::from_str(DESK_TARGETS_JSON).expect("bundled targets parse")
}

/// Yaw angles of the desk grid.
pub fn desk_theta_z() -> Vec<f64> {
    vec![PI / 4.0, 3.0 * PI / 4.0, 5.0 * PI / 4.0, 7.0 * PI / 4.0]
}

/// Pitch angles of the desk grid: the camera axis is a body diagonal,
/// so no axis-aligned face is ever seen edge-on.
pub fn desk_theta_y() -> Vec<f64> {
    let a = (1.0 / 3f64.sqrt()).acos();
    vec![a, PI - a]
}

/// The eight body-diagonal orientations, `index = 2·iz + iy`.
pub fn desk_catalog(pyr: FovPyramid) -> Result<FovCatalog> {
    FovCatalog::grid(pyr, &desk_theta_z(), &desk_theta_y())
}

#[cfg(test)]
mod tests {
    use super::*;
    #[test]
    fn bundled_scenes_load() {
        let cube = desk_cube();
        assert_eq!(cube.len(), 12);
        assert!(cube.is_closed());
        let pillar = desk_pillar();
        assert_eq!(pillar.len(), 24);
        assert_eq!(pillar.outward_fraction(), 1.0);
        assert_eq!(pillar.metadata["target_pool"], "0-11");
        desk_targets().validate(&cube, (1.0, 20.0)).unwrap();
    }

    #[test]
    fn desk_grid_is_body_diagonals() {
        let cat = desk_catalog(FovPyramid::default()).unwrap();
        assert_eq!(cat.len(), 8);
        for o in &cat.orientations {
            let d = o.view_dir.normalize();
            for k in 0..3 {
                assert!((d[k].abs() - 1.0 / 3f64.sqrt()).abs() < 1e-12, "{d:?}");
            }
        }
    }
}
