use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use nalgebra::Vector3;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum facet area accepted, in square metres.
pub const MIN_AREA: f64 = 1e-9;

/// Triangle mesh with per-facet outward unit normals and centroids. Facets
/// are wound counter-clockwise when seen from outside.
#[derive(Clone, Debug)]
pub struct TriMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub facets: Vec<[usize; 3]>,
    pub normals: Vec<Vector3<f64>>,
    pub centroids: Vec<Vector3<f64>>,
    /// `# key: value` comment lines from the source file.
    pub metadata: BTreeMap<String, String>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vector3<f64>>, facets: Vec<[usize; 3]>) -> Result<Self> {
        let mut normals = Vec::with_capacity(facets.len());
        let mut centroids = Vec::with_capacity(facets.len());
        for (k, f) in facets.iter().enumerate() {
            if f.iter().any(|&i| i >= vertices.len()) || f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::Mesh(format!("facet {k} has invalid vertex indices {f:?}")));
            }
            let [a, b, c] = f.map(|i| vertices[i]);
            let cross = (b - a).cross(&(c - a));
            if 0.5 * cross.norm() <= MIN_AREA {
                return Err(Error::Mesh(format!("facet {k} is degenerate (area {:e})", 0.5 * cross.norm())));
            }
            normals.push(cross.normalize());
            centroids.push((a + b + c) / 3.0);
        }
        let mesh = TriMesh { vertices, facets, normals, centroids, metadata: BTreeMap::new() };
        if mesh.is_closed() && mesh.outward_fraction() < 0.99 {
            return Err(Error::Mesh(format!(
                "closed mesh is not consistently outward-wound ({:.1}% of facets face out)",
                100.0 * mesh.outward_fraction()
            )));
        }
        Ok(mesh)
    }

    pub fn len(&self) -> usize {
        self.facets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facets.is_empty()
    }

    /// Every undirected edge is shared by exactly two facets.
    pub fn is_closed(&self) -> bool {
        let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
        for f in &self.facets {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        !edges.is_empty() && edges.values().all(|&c| c == 2)
    }

    /// Fraction of facets whose normal points away from the vertex mean of
    /// their connected component.
    pub fn outward_fraction(&self) -> f64 {
        if self.facets.is_empty() {
            return 1.0;
        }
        let comp = self.components();
        let mut sum = vec![Vector3::zeros(); self.vertices.len()];
        let mut count = vec![0usize; self.vertices.len()];
        for (v, &c) in self.vertices.iter().zip(&comp) {
            sum[c] += v;
            count[c] += 1;
        }
        let out = self
            .facets
            .iter()
            .zip(self.centroids.iter().zip(&self.normals))
            .filter(|(f, (c, n))| {
                let k = comp[f[0]];
                (*c - sum[k] / count[k] as f64).dot(n) > 0.0
            })
            .count();
        out as f64 / self.facets.len() as f64
    }

    /// Component label per vertex; facets sharing a vertex are connected.
    fn components(&self) -> Vec<usize> {
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        let mut parent: Vec<usize> = (0..self.vertices.len()).collect();
        for f in &self.facets {
            for k in 1..3 {
                let (a, b) = (find(&mut parent, f[0]), find(&mut parent, f[k]));
                parent[a.max(b)] = a.min(b);
            }
        }
        (0..self.vertices.len()).map(|i| find(&mut parent, i)).collect()
    }

    /// Same mesh moved by `offset`.
    pub fn translated(&self, offset: Vector3<f64>) -> TriMesh {
        let mut m = self.clone();
        m.vertices.iter_mut().for_each(|v| *v += offset);
        m.centroids.iter_mut().for_each(|c| *c += offset);
        m
    }

    /// Union of two meshes, facets of `other` following those of `self`.
    pub fn merged(&self, other: &TriMesh) -> TriMesh {
        let shift = self.vertices.len();
        let mut m = self.clone();
        m.vertices.extend(&other.vertices);
        m.facets.extend(other.facets.iter().map(|f| f.map(|i| i + shift)));
        m.normals.extend(&other.normals);
        m.centroids.extend(&other.centroids);
        m
    }
}

fn comment_metadata(line: &str, meta: &mut BTreeMap<String, String>) {
    if let Some((k, v)) = line.trim_start_matches('#').split_once(':') {
        meta.insert(k.trim().to_string(), v.trim().to_string());
    }
}

/// Parses ASCII OFF. Only triangular faces are accepted.
pub fn parse_off(text: &str) -> Result<TriMesh> {
    let mut meta = BTreeMap::new();
    let mut tokens: Vec<(usize, Vec<&str>)> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.starts_with('#') {
            comment_metadata(t, &mut meta);
            continue;
        }
        let body = t.split('#').next().unwrap_or("").trim();
        if !body.is_empty() {
            tokens.push((ln + 1, body.split_whitespace().collect()));
        }
    }
    let mut it = tokens.into_iter();
    let (ln, head) = it.next().ok_or_else(|| Error::Mesh("empty OFF file".into()))?;
    let mut counts = head.clone();
    if head[0] == "OFF" {
        counts.remove(0);
    } else if head[0].starts_with("OFF") {
        return Err(Error::Mesh(format!("line {ln}: unsupported OFF variant {}", head[0])));
    } else {
        return Err(Error::Mesh(format!("line {ln}: missing OFF header")));
    }
    let counts = if counts.is_empty() { it.next().map(|(_, t)| t).unwrap_or_default() } else { counts };
    let parse_usize = |s: &str, ln: usize| s.parse::<usize>().map_err(|_| Error::Mesh(format!("line {ln}: bad integer {s:?}")));
    let parse_f64 = |s: &str, ln: usize| s.parse::<f64>().map_err(|_| Error::Mesh(format!("line {ln}: bad number {s:?}")));
    if counts.len() < 2 {
        return Err(Error::Mesh("missing vertex/face counts".into()));
    }
    let nv = parse_usize(counts[0], ln)?;
    let nf = parse_usize(counts[1], ln)?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, t) = it.next().ok_or_else(|| Error::Mesh("truncated vertex list".into()))?;
        if t.len() < 3 {
            return Err(Error::Mesh(format!("line {ln}: vertex needs 3 coordinates")));
        }
        vertices.push(Vector3::new(parse_f64(t[0], ln)?, parse_f64(t[1], ln)?, parse_f64(t[2], ln)?));
    }
    let mut facets = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, t) = it.next().ok_or_else(|| Error::Mesh("truncated face list".into()))?;
        if t.len() < 4 || t[0] != "3" {
            return Err(Error::Mesh(format!("line {ln}: only triangles (\"3 i j k\") are supported")));
        }
        facets.push([parse_usize(t[1], ln)?, parse_usize(t[2], ln)?, parse_usize(t[3], ln)?]);
    }
    let mut mesh = TriMesh::new(vertices, facets)?;
    mesh.metadata = meta;
    Ok(mesh)
}

/// Parses ASCII STL. Shared vertices are merged by exact coordinates and the
/// stored facet normals are ignored in favour of the winding.
pub fn parse_stl(text: &str) -> Result<TriMesh> {
    let mut index: HashMap<[u64; 3], usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut facets = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    let mut saw_solid = false;
    for (ln, line) in text.lines().enumerate() {
        let t: Vec<&str> = line.split_whitespace().collect();
        match t.first().copied() {
            Some("solid") => saw_solid = true,
            Some("vertex") => {
                if t.len() != 4 {
                    return Err(Error::Mesh(format!("line {}: vertex needs 3 coordinates", ln + 1)));
                }
                let mut p = [0.0; 3];
                for k in 0..3 {
                    p[k] = t[k + 1]
                        .parse()
                        .map_err(|_| Error::Mesh(format!("line {}: bad number {:?}", ln + 1, t[k + 1])))?;
                }
                let key = p.map(f64::to_bits);
                let id = *index.entry(key).or_insert_with(|| {
                    vertices.push(Vector3::new(p[0], p[1], p[2]));
                    vertices.len() - 1
                });
                current.push(id);
            }
            Some("endloop") => {
                if current.len() != 3 {
                    return Err(Error::Mesh(format!("line {}: facet with {} vertices", ln + 1, current.len())));
                }
                facets.push([current[0], current[1], current[2]]);
                current.clear();
            }
            _ => {}
        }
    }
    if !saw_solid {
        return Err(Error::Mesh("missing `solid` header".into()));
    }
    TriMesh::new(vertices, facets)
}

/// Loads an OFF or ASCII STL file, chosen by extension and then by header.
pub fn load_mesh(path: &Path) -> Result<TriMesh> {
    let text = std::fs::read_to_string(path)?;
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("off") => parse_off(&text),
        Some("stl") => parse_stl(&text),
        _ if text.trim_start().starts_with("solid") => parse_stl(&text),
        _ => parse_off(&text),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub facet_index: usize,
    pub reward: f64,
}

/// Facets to inspect and their rewards.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TargetSet {
    pub targets: Vec<Target>,
}

impl TargetSet {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn validate(&self, mesh: &TriMesh, reward_range: (f64, f64)) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for t in &self.targets {
            if t.facet_index >= mesh.len() {
                return Err(Error::InvalidParam(format!("target facet {} outside mesh of {}", t.facet_index, mesh.len())));
            }
            if !seen.insert(t.facet_index) {
                return Err(Error::InvalidParam(format!("target facet {} listed twice", t.facet_index)));
            }
            if !(t.reward > 0.0 && t.reward >= reward_range.0 && t.reward <= reward_range.1) {
                return Err(Error::InvalidParam(format!(
                    "reward {} of facet {} outside [{}, {}]",
                    t.reward, t.facet_index, reward_range.0, reward_range.1
                )));
            }
        }
        Ok(())
    }

    /// Draws `count` distinct facets from `pool` with uniform rewards in
    /// `reward_range`. Facets come out in ascending index order.
    pub fn sample(pool: &[usize], count: usize, reward_range: (f64, f64), rng: &mut impl Rng) -> Result<TargetSet> {
        if count > pool.len() {
            return Err(Error::InvalidParam(format!("{count} targets requested from a pool of {}", pool.len())));
        }
        let mut picks: Vec<usize> = sample(rng, pool.len(), count).into_iter().map(|k| pool[k]).collect();
        picks.sort_unstable();
        let targets = picks
            .into_iter()
            .map(|facet_index| Target { facet_index, reward: rng.gen_range(reward_range.0..=reward_range.1) })
            .collect();
        Ok(TargetSet { targets })
    }

    pub fn load(path: &Path) -> Result<TargetSet> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) const UNIT_CUBE: &str = "OFF
# facets: 12
8 12 0
0 0 0
1 0 0
1 1 0
0 1 0
0 0 1
1 0 1
1 1 1
0 1 1
3 0 2 1
3 0 3 2
3 4 5 6
3 4 6 7
3 0 1 5
3 0 5 4
3 2 3 7
3 2 7 6
3 1 2 6
3 1 6 5
3 0 4 7
3 0 7 3
";

    #[test]
    fn cube_topology() {
        let m = parse_off(UNIT_CUBE).unwrap();
        assert_eq!(m.len(), 12);
        assert_eq!(m.vertices.len(), 8);
        assert!(m.is_closed());
        assert_eq!(m.outward_fraction(), 1.0);
        assert_eq!(m.metadata["facets"], "12");
    }

    #[test]
    fn single_triangle_normal_and_centroid() {
        let m = TriMesh::new(
            vec![Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert_eq!(m.normals[0], Vector3::new(0.0, 0.0, 1.0));
        assert!((m.centroids[0] - Vector3::new(1.0 / 3.0, 1.0 / 3.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn degenerate_facet_reported() {
        let e = TriMesh::new(
            vec![Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0), Vector3::new(2.0, 0.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap_err();
        assert!(e.to_string().contains("facet 0"));
    }

    #[test]
    fn inside_out_cube_rejected() {
        let flipped = UNIT_CUBE
            .lines()
            .map(|l| match l.split_whitespace().collect::<Vec<_>>()[..] {
                ["3", a, b, c] => format!("3 {a} {c} {b}"),
                _ => l.to_string(),
            })
            .collect::<Vec<_>>()
            .join("\n");
        assert!(parse_off(&flipped).is_err());
    }

    #[test]
    fn stl_matches_off() {
        let off = parse_off(UNIT_CUBE).unwrap();
        let mut stl = String::from("solid cube\n");
        for f in &off.facets {
            stl.push_str("facet normal 0 0 0\nouter loop\n");
            for &i in f {
                let v = off.vertices[i];
                stl.push_str(&format!("vertex {} {} {}\n", v.x, v.y, v.z));
            }
            stl.push_str("endloop\nendfacet\n");
        }
        stl.push_str("endsolid cube\n");
        let m = parse_stl(&stl).unwrap();
        assert_eq!(m.vertices.len(), 8);
        assert_eq!(m.normals, off.normals);
    }

    #[test]
    fn malformed_off() {
        assert!(parse_off("OFF\n3 1 0\n0 0 0\n1 0 0\n").is_err());
        assert!(parse_off("3 1 0\n").is_err());
        assert!(parse_off("OFF\n4 1 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n4 0 1 2 3\n").is_err());
    }

    #[test]
    fn target_validation() {
        let m = parse_off(UNIT_CUBE).unwrap();
        let ok = TargetSet { targets: vec![Target { facet_index: 3, reward: 5.0 }] };
        assert!(ok.validate(&m, (1.0, 20.0)).is_ok());
        let dup = TargetSet { targets: vec![Target { facet_index: 3, reward: 5.0 }; 2] };
        assert!(dup.validate(&m, (1.0, 20.0)).is_err());
        let out = TargetSet { targets: vec![Target { facet_index: 12, reward: 5.0 }] };
        assert!(out.validate(&m, (1.0, 20.0)).is_err());
        let json = serde_json::to_string(&ok).unwrap();
        assert_eq!(json, r#"[{"facet_index":3,"reward":5.0}]"#);
    }
}
