//! Triangulated surfaces with boundary.
//!
//! A [`SurfaceMesh`] is validated on construction: every triangle must have
//! positive area, every edge must belong to one or two consistently oriented
//! triangles, and the boundary (the vertices on one-triangle edges) is
//! extracted as closed loops.

mod generators;
mod off;

pub use generators::{annulus, cylinder_slit, icosphere, spherical_cap, unit_square_plate, MeshKind};
pub use off::{read_off, write_off};

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Relative area threshold below which a triangle counts as degenerate.
const DEGENERATE_AREA: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub vertices: [usize; 2],
    /// First incident face, and the second one for interior edges.
    pub faces: (usize, Option<usize>),
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.faces.1.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<Edge>,
    face_edges: Vec<[usize; 3]>,
    vertex_faces: Vec<Vec<usize>>,
    vertex_neighbors: Vec<Vec<usize>>,
    on_boundary: Vec<bool>,
    boundary_loops: Vec<Vec<usize>>,
    areas: Vec<f64>,
}

impl SurfaceMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let nv = vertices.len();
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("mesh has no triangles".into()));
        }
        for (f, t) in triangles.iter().enumerate() {
            if t.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidMesh(format!("triangle {f} references a missing vertex")));
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::DegenerateTriangle { face: f, area: 0.0 });
            }
        }

        let mut edge_len_sum = 0.0;
        for t in &triangles {
            for k in 0..3 {
                edge_len_sum += (vertices[t[(k + 1) % 3]] - vertices[t[k]]).norm();
            }
        }
        let mean_edge = edge_len_sum / (3 * triangles.len()) as f64;

        let mut areas = Vec::with_capacity(triangles.len());
        for (f, t) in triangles.iter().enumerate() {
            let a = 0.5 * (vertices[t[1]] - vertices[t[0]]).cross(&(vertices[t[2]] - vertices[t[0]])).norm();
            if !(a > DEGENERATE_AREA * mean_edge * mean_edge) {
                return Err(Error::DegenerateTriangle { face: f, area: a });
            }
            areas.push(a);
        }

        // Directed half-edges keyed by their undirected pair.
        let mut map: HashMap<(usize, usize), Vec<(usize, bool)>> = HashMap::new();
        for (f, t) in triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                map.entry(key).or_default().push((f, a < b));
            }
        }

        let mut keys: Vec<_> = map.keys().copied().collect();
        keys.sort_unstable();
        let mut edges = Vec::with_capacity(keys.len());
        let mut edge_index = HashMap::with_capacity(keys.len());
        for key in keys {
            let uses = &map[&key];
            match uses.as_slice() {
                [(f, _)] => edges.push(Edge { vertices: [key.0, key.1], faces: (*f, None) }),
                [(f0, d0), (f1, d1)] => {
                    if d0 == d1 {
                        return Err(Error::InconsistentOrientation { a: key.0, b: key.1 });
                    }
                    edges.push(Edge { vertices: [key.0, key.1], faces: (*f0, Some(*f1)) });
                }
                _ => return Err(Error::NonManifoldEdge { a: key.0, b: key.1, count: uses.len() }),
            }
            edge_index.insert(key, edges.len() - 1);
        }

        let face_edges = triangles
            .iter()
            .map(|t| {
                let mut fe = [0; 3];
                for k in 0..3 {
                    let (a, b) = (t[k], t[(k + 1) % 3]);
                    fe[k] = edge_index[&(a.min(b), a.max(b))];
                }
                fe
            })
            .collect();

        let mut vertex_faces = vec![Vec::new(); nv];
        for (f, t) in triangles.iter().enumerate() {
            for &v in t {
                vertex_faces[v].push(f);
            }
        }
        if let Some(v) = vertex_faces.iter().position(|fs| fs.is_empty()) {
            return Err(Error::InvalidMesh(format!("vertex {v} belongs to no triangle")));
        }

        let mut vertex_neighbors = vec![Vec::new(); nv];
        for e in &edges {
            vertex_neighbors[e.vertices[0]].push(e.vertices[1]);
            vertex_neighbors[e.vertices[1]].push(e.vertices[0]);
        }

        let mut on_boundary = vec![false; nv];
        // Boundary half-edges oriented as in their only triangle.
        let mut next: HashMap<usize, usize> = HashMap::new();
        for e in edges.iter().filter(|e| e.is_boundary()) {
            on_boundary[e.vertices[0]] = true;
            on_boundary[e.vertices[1]] = true;
            let t = triangles[e.faces.0];
            let k = (0..3)
                .find(|&k| {
                    let (a, b) = (t[k], t[(k + 1) % 3]);
                    (a.min(b), a.max(b)) == (e.vertices[0], e.vertices[1])
                })
                .expect("edge belongs to its face");
            if next.insert(t[k], t[(k + 1) % 3]).is_some() {
                return Err(Error::InvalidMesh(format!("boundary pinches at vertex {}", t[k])));
            }
        }
        let mut boundary_loops = Vec::new();
        let mut starts: Vec<usize> = next.keys().copied().collect();
        starts.sort_unstable();
        let mut visited = vec![false; nv];
        for s in starts {
            if visited[s] {
                continue;
            }
            let mut lp = vec![s];
            visited[s] = true;
            let mut cur = next[&s];
            while cur != s {
                if visited[cur] {
                    return Err(Error::InvalidMesh("boundary does not form closed loops".into()));
                }
                visited[cur] = true;
                lp.push(cur);
                cur = *next
                    .get(&cur)
                    .ok_or_else(|| Error::InvalidMesh("open boundary chain".into()))?;
            }
            boundary_loops.push(lp);
        }

        Ok(Self {
            vertices,
            triangles,
            edges,
            face_edges,
            vertex_faces,
            vertex_neighbors,
            on_boundary,
            boundary_loops,
            areas,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_faces(&self) -> usize {
        self.triangles.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn face_edges(&self, f: usize) -> [usize; 3] {
        self.face_edges[f]
    }

    pub fn vertex_faces(&self, v: usize) -> &[usize] {
        &self.vertex_faces[v]
    }

    pub fn vertex_neighbors(&self, v: usize) -> &[usize] {
        &self.vertex_neighbors[v]
    }

    /// Faces sharing an edge with `f`.
    pub fn face_neighbors(&self, f: usize) -> impl Iterator<Item = usize> + '_ {
        self.face_edges[f].iter().filter_map(move |&e| {
            let (a, b) = self.edges[e].faces;
            match b {
                Some(b) if a == f => Some(b),
                Some(_) => Some(a),
                None => None,
            }
        })
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.on_boundary[v]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.on_boundary
    }

    pub fn boundary_vertices(&self) -> Vec<usize> {
        (0..self.n_vertices()).filter(|&v| self.on_boundary[v]).collect()
    }

    pub fn boundary_loops(&self) -> &[Vec<usize>] {
        &self.boundary_loops
    }

    pub fn face_area(&self, f: usize) -> f64 {
        self.areas[f]
    }

    pub fn face_areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn face_centroid(&self, f: usize) -> Vec3 {
        let t = self.triangles[f];
        (self.vertices[t[0]] + self.vertices[t[1]] + self.vertices[t[2]]) / 3.0
    }

    /// Unit normal of face `f` following the triangle's vertex order.
    pub fn face_normal(&self, f: usize) -> Vec3 {
        let t = self.triangles[f];
        let p = &self.vertices;
        (p[t[1]] - p[t[0]]).cross(&(p[t[2]] - p[t[0]])).normalize()
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e].vertices;
        (self.vertices[b] - self.vertices[a]).norm()
    }

    pub fn mean_edge_length(&self) -> f64 {
        (0..self.edges.len()).map(|e| self.edge_length(e)).sum::<f64>() / self.edges.len() as f64
    }

    pub fn max_edge_length(&self) -> f64 {
        (0..self.edges.len()).map(|e| self.edge_length(e)).fold(0.0, f64::max)
    }

    /// Index of the vertex closest to `p` in the ambient metric.
    pub fn nearest_vertex(&self, p: &Vec3) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, v) in self.vertices.iter().enumerate() {
            let d = (v - p).norm_squared();
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> SurfaceMesh {
        let v = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        ];
        SurfaceMesh::new(v, vec![[0, 1, 2], [0, 2, 3]]).unwrap()
    }

    #[test]
    fn two_triangle_square() {
        let m = square();
        assert_eq!(m.edges().len(), 5);
        assert_eq!(m.boundary_vertices(), vec![0, 1, 2, 3]);
        assert_eq!(m.boundary_loops().len(), 1);
        assert_eq!(m.boundary_loops()[0].len(), 4);
        assert!((m.total_area() - 1.0).abs() < 1e-15);
        assert_eq!(m.face_neighbors(0).collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn rejects_degenerate_triangle() {
        let v = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0)];
        match SurfaceMesh::new(v, vec![[0, 1, 2]]) {
            Err(Error::DegenerateTriangle { face, .. }) => assert_eq!(face, 0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_non_manifold_edge() {
        let v = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, -1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ];
        let r = SurfaceMesh::new(v, vec![[0, 1, 2], [1, 0, 3], [0, 1, 4]]);
        assert!(matches!(r, Err(Error::NonManifoldEdge { .. }) | Err(Error::InconsistentOrientation { .. })));
    }

    #[test]
    fn rejects_flipped_neighbor() {
        let v = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        ];
        let r = SurfaceMesh::new(v, vec![[0, 1, 2], [0, 3, 2]]);
        assert!(matches!(r, Err(Error::InconsistentOrientation { .. })));
    }
}
