//! Triangle meshes: validated construction, file formats and graph geodesics.

mod geodesic;
pub mod io;

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use crate::{Error, Result};

pub use geodesic::{diameter, diameter_exact, dijkstra, geodesic_distances, GeodesicField};
pub use io::{load_mesh, save_mesh, MeshFormat};

/// An immutable, validated triangle mesh.
///
/// Construction checks that every face index is in range, that no face
/// repeats a vertex, that every edge has positive length, that no edge is
/// shared by more than two faces, and that the edge graph is connected.
#[derive(Clone, Debug)]
pub struct Shape {
    vertices: Vec<Point3<f64>>,
    faces: Vec<[usize; 3]>,
    edges: Vec<(usize, usize)>,
    edge_lengths: Vec<f64>,
    vertex_areas: Vec<f64>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl Shape {
    pub fn new(vertices: Vec<Point3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        if n == 0 {
            return Err(Error::InvalidMesh("mesh has no vertices".into()));
        }
        if faces.is_empty() {
            return Err(Error::InvalidMesh("mesh has no faces".into()));
        }
        if let Some(p) = vertices.iter().position(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidMesh(format!("vertex {p} has non-finite coordinates")));
        }
        for (fi, f) in faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&v| v >= n) {
                return Err(Error::InvalidMesh(format!(
                    "face {fi} references vertex {bad}, but the mesh has {n} vertices"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidMesh(format!(
                    "face {fi} is degenerate: repeated vertex in {:?}",
                    f
                )));
            }
        }

        // Undirected edge -> number of incident faces.
        let mut edge_faces: HashMap<(usize, usize), usize> = HashMap::new();
        for f in &faces {
            for e in 0..3 {
                let (a, b) = (f[e], f[(e + 1) % 3]);
                *edge_faces.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        let mut edges: Vec<(usize, usize)> = edge_faces.keys().copied().collect();
        edges.sort_unstable();
        if let Some(((a, b), c)) = edges
            .iter()
            .map(|e| (*e, edge_faces[e]))
            .find(|&(_, c)| c > 2)
        {
            return Err(Error::InvalidMesh(format!(
                "non-manifold edge ({a}, {b}) shared by {c} faces"
            )));
        }

        let mut edge_lengths = Vec::with_capacity(edges.len());
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in &edges {
            let len = (vertices[a] - vertices[b]).norm();
            if len <= 0.0 {
                return Err(Error::InvalidMesh(format!(
                    "edge ({a}, {b}) has zero length"
                )));
            }
            edge_lengths.push(len);
            adjacency[a].push((b, len));
            adjacency[b].push((a, len));
        }

        let mut vertex_areas = vec![0.0; n];
        for f in &faces {
            let area = triangle_area(&vertices[f[0]], &vertices[f[1]], &vertices[f[2]]);
            for &v in f {
                vertex_areas[v] += area / 3.0;
            }
        }

        let shape = Shape {
            vertices,
            faces,
            edges,
            edge_lengths,
            vertex_areas,
            adjacency,
        };
        let reach = geodesic::reachable_count(&shape.adjacency, 0);
        if reach != n {
            return Err(Error::Disconnected {
                source_vertex: 0,
                unreachable: n - reach,
                total: n,
            });
        }
        Ok(shape)
    }

    /// Number of vertices `m_i`.
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// Undirected edges `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_lengths(&self) -> &[f64] {
        &self.edge_lengths
    }

    /// Barycentric lumped area per vertex.
    pub fn vertex_areas(&self) -> &[f64] {
        &self.vertex_areas
    }

    pub fn total_area(&self) -> f64 {
        self.vertex_areas.iter().sum()
    }

    /// Neighbours of each vertex with the Euclidean edge length.
    pub fn adjacency(&self) -> &[Vec<(usize, f64)>] {
        &self.adjacency
    }

    /// Returns a copy with vertex `v` of the result equal to vertex
    /// `order[v]` of `self`; faces are re-indexed accordingly.
    pub fn permuted(&self, order: &[usize]) -> Result<Shape> {
        let n = self.len();
        if order.len() != n {
            return Err(Error::Dimension(format!(
                "permutation has length {}, mesh has {n} vertices",
                order.len()
            )));
        }
        let mut inverse = vec![usize::MAX; n];
        for (new, &old) in order.iter().enumerate() {
            if old >= n || inverse[old] != usize::MAX {
                return Err(Error::InvalidArgument("order is not a permutation".into()));
            }
            inverse[old] = new;
        }
        let vertices = order.iter().map(|&o| self.vertices[o]).collect();
        let faces = self
            .faces
            .iter()
            .map(|f| [inverse[f[0]], inverse[f[1]], inverse[f[2]]])
            .collect();
        Shape::new(vertices, faces)
    }

    /// Applies `x -> R x + t` to every vertex.
    pub fn transformed(&self, rotation: &nalgebra::Rotation3<f64>, translation: &Vector3<f64>) -> Result<Shape> {
        let vertices = self
            .vertices
            .iter()
            .map(|p| rotation * p + translation)
            .collect();
        Shape::new(vertices, self.faces.clone())
    }

    /// Stable content hash of vertices and faces (hex SHA-256).
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for p in &self.vertices {
            for c in p.coords.iter() {
                h.update(c.to_le_bytes());
            }
        }
        for f in &self.faces {
            for &v in f {
                h.update((v as u64).to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub(crate) fn triangle_area(a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}
