use std::collections::HashMap;

use super::geometry::{triangle_area, Vec3};
use crate::error::{Error, Result};

/// Triangle surface with area-weighted vertex normals.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    vertex_normals: Vec<Vec3>,
}

/// Triangles whose area falls below this fraction of the mean are rejected.
const DEGENERATE_AREA_FRACTION: f64 = 1e-14;

impl SurfaceMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&i| i >= n) {
                return Err(Error::Validation(format!(
                    "triangle {t} references vertex {bad} but the mesh has {n} vertices"
                )));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::Validation(format!(
                    "triangle {t} repeats a vertex: {tri:?}"
                )));
            }
        }
        if !triangles.is_empty() {
            let areas: Vec<f64> = triangles
                .iter()
                .map(|t| triangle_area(&vertices[t[0]], &vertices[t[1]], &vertices[t[2]]))
                .collect();
            let mean = areas.iter().sum::<f64>() / areas.len() as f64;
            let bad: Vec<usize> = areas
                .iter()
                .enumerate()
                .filter(|(_, &a)| !(a >= DEGENERATE_AREA_FRACTION * mean) || mean == 0.0)
                .map(|(i, _)| i)
                .collect();
            if !bad.is_empty() {
                return Err(Error::Validation(format!(
                    "degenerate triangles (zero area): {bad:?}"
                )));
            }
        }
        let vertex_normals = compute_vertex_normals(&vertices, &triangles);
        Ok(SurfaceMesh {
            vertices,
            triangles,
            vertex_normals,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn vertex_normals(&self) -> &[Vec3] {
        &self.vertex_normals
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Same connectivity with new vertex positions (normals recomputed).
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::Dimension {
                context: "SurfaceMesh::with_vertices",
                expected: self.vertices.len(),
                got: vertices.len(),
            });
        }
        let vertex_normals = compute_vertex_normals(&vertices, &self.triangles);
        Ok(SurfaceMesh {
            vertices,
            triangles: self.triangles.clone(),
            vertex_normals,
        })
    }

    pub fn scaled(&self, s: f64) -> Self {
        SurfaceMesh {
            vertices: self.vertices.iter().map(|v| v * s).collect(),
            triangles: self.triangles.clone(),
            vertex_normals: self.vertex_normals.clone(),
        }
    }

    pub fn face_normal(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.triangles[t];
        let n = (self.vertices[b] - self.vertices[a]).cross(&(self.vertices[c] - self.vertices[a]));
        let len = n.norm();
        if len > 0.0 {
            n / len
        } else {
            Vec3::z()
        }
    }

    pub fn total_area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| triangle_area(&self.vertices[t[0]], &self.vertices[t[1]], &self.vertices[t[2]]))
            .sum()
    }

    /// Barycentric (one third of incident triangle areas) vertex areas.
    pub fn vertex_areas(&self) -> Vec<f64> {
        let mut areas = vec![0.0; self.vertices.len()];
        for t in &self.triangles {
            let a = triangle_area(&self.vertices[t[0]], &self.vertices[t[1]], &self.vertices[t[2]]);
            for &i in t {
                areas[i] += a / 3.0;
            }
        }
        areas
    }

    /// Triangles incident to each vertex.
    pub fn vertex_triangles(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &i in tri {
                out[i].push(t);
            }
        }
        out
    }

    /// Number of triangles sharing each undirected edge.
    pub fn edge_counts(&self) -> HashMap<(usize, usize), usize> {
        let mut counts = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Every edge is shared by exactly two triangles.
    pub fn is_closed(&self) -> bool {
        self.edge_counts().values().all(|&c| c == 2)
    }

    /// Signed enclosed volume (divergence theorem); meaningful for closed,
    /// consistently oriented meshes.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let (a, b, c) = (&self.vertices[t[0]], &self.vertices[t[1]], &self.vertices[t[2]]);
                a.dot(&b.cross(c)) / 6.0
            })
            .sum()
    }

    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        bounding_box(&self.vertices)
    }
}

pub(crate) fn bounding_box(points: &[Vec3]) -> (Vec3, Vec3) {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

fn compute_vertex_normals(vertices: &[Vec3], triangles: &[[usize; 3]]) -> Vec<Vec3> {
    let mut normals = vec![Vec3::zeros(); vertices.len()];
    for t in triangles {
        // Cross product length is twice the area: area weighting for free.
        let n = (vertices[t[1]] - vertices[t[0]]).cross(&(vertices[t[2]] - vertices[t[0]]));
        for &i in t {
            normals[i] += n;
        }
    }
    for n in &mut normals {
        let len = n.norm();
        // Isolated vertices get an arbitrary but valid unit normal.
        *n = if len > 0.0 { *n / len } else { Vec3::z() };
    }
    normals
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_indices_and_repeats() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::y()];
        let err = SurfaceMesh::new(v.clone(), vec![[0, 1, 5]]).unwrap_err();
        assert!(err.to_string().contains("triangle 0"));
        assert!(SurfaceMesh::new(v, vec![[0, 1, 1]]).is_err());
    }

    #[test]
    fn rejects_degenerate_triangles() {
        let v = vec![
            Vec3::zeros(),
            Vec3::x(),
            Vec3::y(),
            Vec3::new(2.0, 0.0, 0.0),
        ];
        let err = SurfaceMesh::new(v, vec![[0, 1, 2], [0, 1, 3]]).unwrap_err();
        assert!(err.to_string().contains("[1]"), "{err}");
    }

    #[test]
    fn normals_are_unit() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()];
        let m = SurfaceMesh::new(v, vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]]).unwrap();
        for n in m.vertex_normals() {
            assert!((n.norm() - 1.0).abs() < 1e-12);
        }
        assert!(m.is_closed());
        assert!((m.signed_volume() - 1.0 / 6.0).abs() < 1e-15);
    }
}
