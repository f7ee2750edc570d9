//! Half-space form of the convex hull of a point set.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for containment and coplanar merging.
pub const HULL_TOL: f64 = 1e-9;

/// `{x : alpha_j · x ≤ beta_j for all j}` with unit normals.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HalfSpaceHull {
    pub alpha: Vec<Vector3<f64>>,
    pub beta: Vec<f64>,
}

impl HalfSpaceHull {
    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn contains(&self, x: &Vector3<f64>, tol: f64) -> bool {
        self.alpha.iter().zip(&self.beta).all(|(a, b)| a.dot(x) <= b + tol)
    }

    /// Largest signed distance `alpha_j · x - beta_j`; positive outside.
    pub fn clearance(&self, x: &Vector3<f64>) -> f64 {
        self.alpha.iter().zip(&self.beta).map(|(a, b)| a.dot(x) - b).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Computes the facet planes of the convex hull by testing every vertex
/// triple for a supporting plane. Cubic in the vertex count per candidate,
/// which is fine for desk-scale meshes; coplanar duplicates are merged.
pub fn hull_halfspaces(points: &[Vector3<f64>]) -> Result<HalfSpaceHull> {
    let n = points.len();
    if n < 4 {
        return Err(Error::Degenerate(format!("{n} points cannot span a volume")));
    }
    let scale = points.iter().map(|p| p.amax()).fold(1.0, f64::max);
    let tol = HULL_TOL * scale;
    let mut hull = HalfSpaceHull { alpha: Vec::new(), beta: Vec::new() };
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let normal = (points[j] - points[i]).cross(&(points[k] - points[i]));
                let len = normal.norm();
                if len <= 1e-12 * scale * scale {
                    continue;
                }
                let mut a = normal / len;
                let mut b = a.dot(&points[i]);
                let (mut above, mut below) = (false, false);
                for p in points {
                    let s = a.dot(p) - b;
                    above |= s > tol;
                    below |= s < -tol;
                    if above && below {
                        break;
                    }
                }
                if above && below {
                    continue;
                }
                if above {
                    a = -a;
                    b = -b;
                }
                let dup = hull
                    .alpha
                    .iter()
                    .zip(&hull.beta)
                    .any(|(a2, b2)| a2.dot(&a) > 1.0 - HULL_TOL && (b2 - b).abs() <= tol);
                if !dup {
                    hull.alpha.push(a);
                    hull.beta.push(b);
                }
            }
        }
    }
    if hull.len() < 4 {
        return Err(Error::Degenerate("vertex set is flat".into()));
    }
    Ok(hull)
}
