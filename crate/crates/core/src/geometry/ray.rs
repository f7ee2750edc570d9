//! Ray-traced visibility, the ground truth for the back-face filter.

use nalgebra::Vector3;

use super::mesh::TriMesh;

/// Barycentric slack when testing a hit against a triangle.
pub const BARY_TOL: f64 = 1e-9;

/// Möller–Trumbore intersection of the segment `origin + t·dir`, returning
/// `t` when the supporting line meets the triangle.
fn intersect(origin: &Vector3<f64>, dir: &Vector3<f64>, tri: [Vector3<f64>; 3]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 * e1.norm() * e2.norm() * dir.norm() {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - tri[0];
    let u = s.dot(&p) * inv;
    if u < -BARY_TOL || u > 1.0 + BARY_TOL {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < -BARY_TOL || u + v > 1.0 + BARY_TOL {
        return None;
    }
    Some(e2.dot(&q) * inv)
}

/// Facet `facet` is visible from `origin` when it faces the viewer and the
/// open segment from `origin` to its centroid crosses no other facet.
pub fn ray_visible(mesh: &TriMesh, origin: &Vector3<f64>, facet: usize) -> bool {
    let c = mesh.centroids[facet];
    if (c - origin).dot(&mesh.normals[facet]) >= 0.0 {
        return false;
    }
    let dir = c - origin;
    let eps = 1e-9;
    !mesh.facets.iter().enumerate().any(|(k, f)| {
        k != facet
            && intersect(origin, &dir, f.map(|i| mesh.vertices[i])).is_some_and(|t| t > eps && t < 1.0 - eps)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::mesh::{parse_off, tests::UNIT_CUBE};

    #[test]
    fn free_triangle() {
        let m = TriMesh::new(
            vec![Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert!(ray_visible(&m, &Vector3::new(0.2, 0.2, 3.0), 0));
        assert!(!ray_visible(&m, &Vector3::new(0.2, 0.2, -3.0), 0));
    }

    #[test]
    fn far_side_of_cube_is_hidden() {
        let m = parse_off(UNIT_CUBE).unwrap();
        // Facets 0, 1 form the bottom (z = 0), 2, 3 the top (z = 1).
        let above = Vector3::new(0.5, 0.5, 3.0);
        assert!(ray_visible(&m, &above, 2));
        assert!(!ray_visible(&m, &above, 0));
    }

    #[test]
    fn occluder_blocks() {
        let cube = parse_off(UNIT_CUBE).unwrap();
        let lid = TriMesh::new(
            vec![Vector3::new(-1.0, -1.0, 2.0), Vector3::new(3.0, -1.0, 2.0), Vector3::new(-1.0, 3.0, 2.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let scene = cube.merged(&lid);
        assert!(!ray_visible(&scene, &Vector3::new(0.4, 0.4, 3.0), 2));
        assert!(ray_visible(&scene, &Vector3::new(0.4, 0.4, 1.5), 2));
    }
}
