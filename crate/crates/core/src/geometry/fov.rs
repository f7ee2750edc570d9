//! Camera field of view as a square pyramid with its apex at the camera.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use super::mesh::{TargetSet, TriMesh};
use crate::error::{Error, Result};

/// Tolerance of [`point_in_fov`].
pub const FOV_TOL: f64 = 1e-9;

/// Relative slack of the back-face test, so that edge-on views that pick up
/// rounding from the vertex sums still count as facing.
pub const BACKFACE_TOL: f64 = 1e-9;

pub type FovVertices = SMatrix<f64, 3, 5>;
pub type FovNormals = SMatrix<f64, 5, 3>;
pub type FovOffsets = SVector<f64, 5>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FovPyramid {
    /// Side of the square base [m].
    pub w: f64,
    /// Apex-to-base height [m].
    pub h: f64,
}

impl Default for FovPyramid {
    fn default() -> Self {
        FovPyramid { w: 5.5, h: 6.5 }
    }
}

impl FovPyramid {
    /// Unrotated vertices: the four base corners at `z = H`, then the apex.
    pub fn vertices(&self) -> FovVertices {
        let (a, h) = (self.w / 2.0, self.h);
        FovVertices::from_columns(&[
            Vector3::new(-a, a, h),
            Vector3::new(a, a, h),
            Vector3::new(a, -a, h),
            Vector3::new(-a, -a, h),
            Vector3::zeros(),
        ])
    }
}

// Exact zeros at multiples of pi/2 keep axis-aligned dot products exact.
fn snapped(v: f64) -> f64 {
    if v.abs() < 1e-12 {
        0.0
    } else {
        v
    }
}

/// `R_z(theta_z) · R_y(theta_y)`.
pub fn rotation(theta_z: f64, theta_y: f64) -> Matrix3<f64> {
    let (sz, cz) = (snapped(theta_z.sin()), snapped(theta_z.cos()));
    let (sy, cy) = (snapped(theta_y.sin()), snapped(theta_y.cos()));
    let rz = Matrix3::new(cz, -sz, 0.0, sz, cz, 0.0, 0.0, 0.0, 1.0);
    let ry = Matrix3::new(cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy);
    rz * ry
}

pub fn rotate_fov(pyr: &FovPyramid, theta_z: f64, theta_y: f64) -> FovVertices {
    rotation(theta_z, theta_y) * pyr.vertices()
}

/// Outward unit normals and offsets of the four lateral faces and the base
/// (row 4), so that the pyramid is `{x : Γx ≤ Δ}`.
pub fn fov_halfspaces(v: &FovVertices) -> Result<(FovNormals, FovOffsets)> {
    let apex: Vector3<f64> = v.column(4).into();
    let base: Vec<Vector3<f64>> = (0..4).map(|k| v.column(k).into()).collect();
    let interior = apex + 0.5 * (base.iter().sum::<Vector3<f64>>() / 4.0 - apex);
    let mut gamma = FovNormals::zeros();
    let mut delta = FovOffsets::zeros();
    let mut face = |row: usize, p0: Vector3<f64>, p1: Vector3<f64>, p2: Vector3<f64>| -> Result<()> {
        let n = (p1 - p0).cross(&(p2 - p0));
        let norm = n.norm();
        if norm < 1e-12 {
            return Err(Error::Degenerate(format!("FOV face {row} has no area")));
        }
        let mut n = n / norm;
        let mut d = n.dot(&p0);
        if n.dot(&interior) > d {
            n = -n;
            d = -d;
        }
        gamma.set_row(row, &n.transpose());
        delta[row] = d;
        Ok(())
    };
    for k in 0..4 {
        face(k, apex, base[k], base[(k + 1) % 4])?;
    }
    face(4, base[0], base[1], base[2])?;
    Ok((gamma, delta))
}

/// Viewing direction: mean of the base corners, measured from the apex.
pub fn viewing_direction(v: &FovVertices) -> Vector3<f64> {
    let apex: Vector3<f64> = v.column(4).into();
    (0..4).map(|k| Vector3::from(v.column(k)) - apex).sum::<Vector3<f64>>() / 4.0
}

/// `Γp ≤ Δ + Γq` componentwise: point `p` lies in the FOV of a camera at `q`.
pub fn point_in_fov(gamma: &FovNormals, delta: &FovOffsets, camera: &Vector3<f64>, point: &Vector3<f64>) -> bool {
    let lhs = gamma * point;
    let rhs = delta + gamma * camera;
    (0..5).all(|j| lhs[j] <= rhs[j] + FOV_TOL)
}

/// One gimbal configuration with its precomputed geometry.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FovOrientation {
    pub index: usize,
    pub theta_z: f64,
    pub theta_y: f64,
    pub vertices: FovVertices,
    pub gamma: FovNormals,
    pub delta: FovOffsets,
    /// Viewing direction (apex at the origin).
    pub view_dir: Vector3<f64>,
    /// Base centroid (apex at the origin); equal to `view_dir`.
    pub base_centroid: Vector3<f64>,
}

impl FovOrientation {
    pub fn new(pyr: &FovPyramid, index: usize, theta_z: f64, theta_y: f64) -> Result<Self> {
        let vertices = rotate_fov(pyr, theta_z, theta_y);
        let (gamma, delta) = fov_halfspaces(&vertices)?;
        let view_dir = viewing_direction(&vertices);
        Ok(FovOrientation { index, theta_z, theta_y, vertices, gamma, delta, view_dir, base_centroid: view_dir })
    }

    pub fn sees(&self, camera: &Vector3<f64>, point: &Vector3<f64>) -> bool {
        point_in_fov(&self.gamma, &self.delta, camera, point)
    }
}

/// The set of selectable gimbal orientations.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FovCatalog {
    pub pyramid: FovPyramid,
    pub orientations: Vec<FovOrientation>,
}

impl FovCatalog {
    /// Cartesian grid, `theta_z` outer and `theta_y` inner:
    /// `index = iz * |theta_y| + iy`.
    pub fn grid(pyr: FovPyramid, thetas_z: &[f64], thetas_y: &[f64]) -> Result<Self> {
        let pairs: Vec<(f64, f64)> = thetas_z.iter().flat_map(|&z| thetas_y.iter().map(move |&y| (z, y))).collect();
        Self::from_angles(pyr, &pairs)
    }

    pub fn from_angles(pyr: FovPyramid, pairs: &[(f64, f64)]) -> Result<Self> {
        if !(pyr.w > 0.0 && pyr.h > 0.0) {
            return Err(Error::InvalidParam(format!("FOV size W={} H={}", pyr.w, pyr.h)));
        }
        let orientations =
            pairs.iter().enumerate().map(|(k, &(z, y))| FovOrientation::new(&pyr, k, z, y)).collect::<Result<_>>()?;
        Ok(FovCatalog { pyramid: pyr, orientations })
    }

    /// Eight equally spaced angles on the full circle for both axes.
    pub fn full_grid(pyr: FovPyramid) -> Result<Self> {
        let angles: Vec<f64> = (0..8).map(|k| 2.0 * std::f64::consts::PI * k as f64 / 8.0).collect();
        Self::grid(pyr, &angles, &angles)
    }

    /// Keeps the listed orientations, re-indexed from 0 in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut orientations = Vec::with_capacity(indices.len());
        for (k, &i) in indices.iter().enumerate() {
            let mut o = self
                .orientations
                .get(i)
                .cloned()
                .ok_or_else(|| Error::InvalidParam(format!("orientation {i} outside catalog of {}", self.len())))?;
            o.index = k;
            orientations.push(o);
        }
        Ok(FovCatalog { pyramid: self.pyramid, orientations })
    }

    pub fn len(&self) -> usize {
        self.orientations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orientations.is_empty()
    }
}

/// `b[i][φ]`: the camera may face target `i` in orientation `φ`, i.e.
/// `dot(view_dir_φ, normal_i) ≤ 0`. Edge-on counts as facing.
pub fn backface_table(mesh: &TriMesh, targets: &TargetSet, fovs: &FovCatalog) -> Vec<Vec<bool>> {
    targets
        .targets
        .iter()
        .map(|t| {
            let n = mesh.normals[t.facet_index];
            fovs.orientations.iter().map(|o| o.view_dir.dot(&n) <= BACKFACE_TOL * o.view_dir.norm()).collect()
        })
        .collect()
}
