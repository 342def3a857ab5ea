use std::collections::HashMap;

use super::geometry::{tet_signed_volume, Vec3};
use crate::error::{Error, Result};

/// Boundary triangle of a tet mesh, oriented with the outward normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFace {
    pub nodes: [usize; 3],
    pub tet: usize,
    pub normal: Vec3,
}

/// Tetrahedral mesh with positive-volume elements and its boundary/interior
/// node partition.
#[derive(Debug, Clone)]
pub struct TetMesh {
    nodes: Vec<Vec3>,
    tets: Vec<[usize; 4]>,
    boundary_faces: Vec<BoundaryFace>,
    boundary_nodes: Vec<usize>,
    interior_nodes: Vec<usize>,
    /// Position of each node in `boundary_nodes`, or `usize::MAX`.
    boundary_index: Vec<usize>,
    repaired: usize,
}

const DEGENERATE_VOLUME_FRACTION: f64 = 1e-12;

/// Faces of tet `[a, b, c, d]` opposite each node, outward for positive volume.
pub(crate) fn tet_faces(t: &[usize; 4]) -> [[usize; 3]; 4] {
    let [a, b, c, d] = *t;
    [[b, c, d], [a, d, c], [a, b, d], [a, c, b]]
}

impl TetMesh {
    /// Builds the mesh, swapping two nodes of every negatively oriented tet.
    pub fn new(nodes: Vec<Vec3>, mut tets: Vec<[usize; 4]>) -> Result<Self> {
        let n = nodes.len();
        if tets.is_empty() {
            return Err(Error::Validation("tet mesh has no elements".into()));
        }
        let mut used = vec![false; n];
        for (e, t) in tets.iter().enumerate() {
            for &i in t {
                if i >= n {
                    return Err(Error::Validation(format!(
                        "tet {e} references node {i} but the mesh has {n} nodes"
                    )));
                }
                used[i] = true;
            }
            for i in 0..4 {
                for j in i + 1..4 {
                    if t[i] == t[j] {
                        return Err(Error::Validation(format!("tet {e} repeats node {}", t[i])));
                    }
                }
            }
        }
        if let Some(unused) = used.iter().position(|&u| !u) {
            return Err(Error::Validation(format!(
                "node {unused} is not referenced by any tet"
            )));
        }

        let volumes: Vec<f64> = tets
            .iter()
            .map(|t| tet_signed_volume(&nodes[t[0]], &nodes[t[1]], &nodes[t[2]], &nodes[t[3]]))
            .collect();
        let mean_abs = volumes.iter().map(|v| v.abs()).sum::<f64>() / volumes.len() as f64;
        let degenerate: Vec<usize> = volumes
            .iter()
            .enumerate()
            .filter(|(_, v)| !(v.abs() > DEGENERATE_VOLUME_FRACTION * mean_abs))
            .map(|(i, _)| i)
            .collect();
        if !degenerate.is_empty() {
            return Err(Error::Validation(format!("zero-volume tets: {degenerate:?}")));
        }
        let mut repaired = 0;
        for (t, v) in tets.iter_mut().zip(&volumes) {
            if *v < 0.0 {
                t.swap(2, 3);
                repaired += 1;
            }
        }

        let mut face_owner: HashMap<[usize; 3], (usize, usize, [usize; 3])> = HashMap::new();
        for (e, t) in tets.iter().enumerate() {
            for f in tet_faces(t) {
                let mut key = f;
                key.sort_unstable();
                let entry = face_owner.entry(key).or_insert((0, e, f));
                entry.0 += 1;
                if entry.0 > 2 {
                    return Err(Error::Validation(format!(
                        "face {key:?} is shared by more than two tets"
                    )));
                }
            }
        }
        let mut boundary: Vec<(usize, [usize; 3])> = face_owner
            .values()
            .filter(|(count, _, _)| *count == 1)
            .map(|&(_, tet, f)| (tet, f))
            .collect();
        // Deterministic order independent of hashing.
        boundary.sort_unstable();
        let boundary_faces: Vec<BoundaryFace> = boundary
            .into_iter()
            .map(|(tet, f)| {
                let nvec = (nodes[f[1]] - nodes[f[0]]).cross(&(nodes[f[2]] - nodes[f[0]]));
                BoundaryFace {
                    nodes: f,
                    tet,
                    normal: nvec.normalize(),
                }
            })
            .collect();

        let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
        for f in &boundary_faces {
            for k in 0..3 {
                let (a, b) = (f.nodes[k], f.nodes[(k + 1) % 3]);
                *edge_count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        let mut nonmanifold: Vec<(usize, usize)> = edge_count
            .iter()
            .filter(|(_, &c)| c > 2)
            .map(|(&e, _)| e)
            .collect();
        if !nonmanifold.is_empty() {
            nonmanifold.sort_unstable();
            return Err(Error::Validation(format!(
                "non-manifold boundary: edges shared by more than two boundary faces: {nonmanifold:?}"
            )));
        }

        let mut on_boundary = vec![false; n];
        for f in &boundary_faces {
            for &i in &f.nodes {
                on_boundary[i] = true;
            }
        }
        let boundary_nodes: Vec<usize> = (0..n).filter(|&i| on_boundary[i]).collect();
        let interior_nodes: Vec<usize> = (0..n).filter(|&i| !on_boundary[i]).collect();
        let mut boundary_index = vec![usize::MAX; n];
        for (k, &i) in boundary_nodes.iter().enumerate() {
            boundary_index[i] = k;
        }

        Ok(TetMesh {
            nodes,
            tets,
            boundary_faces,
            boundary_nodes,
            interior_nodes,
            boundary_index,
            repaired,
        })
    }

    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    pub fn tets(&self) -> &[[usize; 4]] {
        &self.tets
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_tets(&self) -> usize {
        self.tets.len()
    }

    pub fn boundary_faces(&self) -> &[BoundaryFace] {
        &self.boundary_faces
    }

    /// Boundary node ids in ascending order; condensed quantities use this order.
    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior_nodes
    }

    /// Index of `node` within [`Self::boundary_nodes`].
    pub fn boundary_index(&self, node: usize) -> Option<usize> {
        match self.boundary_index[node] {
            usize::MAX => None,
            k => Some(k),
        }
    }

    /// Number of tets whose orientation was repaired on load.
    pub fn repaired_tets(&self) -> usize {
        self.repaired
    }

    pub fn tet_volume(&self, e: usize) -> f64 {
        let t = &self.tets[e];
        tet_signed_volume(&self.nodes[t[0]], &self.nodes[t[1]], &self.nodes[t[2]], &self.nodes[t[3]])
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.tets.len()).map(|e| self.tet_volume(e)).sum()
    }

    pub fn mean_tet_volume(&self) -> f64 {
        self.total_volume() / self.tets.len() as f64
    }

    pub fn boundary_area(&self) -> f64 {
        self.boundary_faces
            .iter()
            .map(|f| {
                super::geometry::triangle_area(
                    &self.nodes[f.nodes[0]],
                    &self.nodes[f.nodes[1]],
                    &self.nodes[f.nodes[2]],
                )
            })
            .sum()
    }

    /// Tets incident to each node.
    pub fn node_tets(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for (e, t) in self.tets.iter().enumerate() {
            for &i in t {
                out[i].push(e);
            }
        }
        out
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut m = self.clone();
        for p in &mut m.nodes {
            *p *= s;
        }
        m
    }

    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        super::surface::bounding_box(&self.nodes)
    }
}
