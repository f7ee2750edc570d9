//! Meshes, camera FOV geometry, back-face elimination, the structure hull
//! and a ray-traced visibility oracle.

pub mod fov;
pub mod hull;
pub mod mesh;
pub mod ray;

pub use fov::{
    backface_table, fov_halfspaces, point_in_fov, rotate_fov, rotation, viewing_direction, FovCatalog, FovOrientation,
    FovPyramid,
};
pub use hull::{hull_halfspaces, HalfSpaceHull};
pub use mesh::{load_mesh, parse_off, parse_stl, Target, TargetSet, TriMesh};
pub use ray::ray_visible;

use crate::error::Result;

/// A structure to inspect: its mesh, the target facets and the convex hull
/// the vehicle must stay out of.
#[derive(Clone, Debug)]
pub struct InspectionScene {
    pub mesh: TriMesh,
    pub targets: TargetSet,
    pub hull: HalfSpaceHull,
}

impl InspectionScene {
    pub fn new(mesh: TriMesh, targets: TargetSet) -> Result<Self> {
        let hull = hull_halfspaces(&mesh.vertices)?;
        Ok(InspectionScene { mesh, targets, hull })
    }

    pub fn with_targets(&self, targets: TargetSet) -> Self {
        InspectionScene { mesh: self.mesh.clone(), targets, hull: self.hull.clone() }
    }
}
