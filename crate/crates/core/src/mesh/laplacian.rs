//! Cotangent Laplace-Beltrami operator with lumped barycentric mass.
//!
//! The operator is `Δ = -M⁻¹ W` where `W` is the positive semidefinite
//! cotangent stiffness (`W_ij = -w_ij`, `W_ii = Σ_j w_ij`) and `M` the
//! diagonal vertex-area mass.

use std::collections::BTreeMap;

use super::SurfaceMesh;
use crate::linalg::CsrMatrix;

/// Cotangent edge weights are clamped into this range.
pub const MAX_COTAN_WEIGHT: f64 = 1e6;

#[derive(Debug, Clone)]
pub struct LaplaceBeltrami {
    stiffness: CsrMatrix,
    mass: Vec<f64>,
    clamped_edges: usize,
}

impl LaplaceBeltrami {
    pub fn new(mesh: &SurfaceMesh) -> Self {
        let v = mesh.vertices();
        let mut edge_w: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for t in mesh.triangles() {
            for k in 0..3 {
                // Angle at corner k is opposite edge (k+1, k+2).
                let (o, i, j) = (t[k], t[(k + 1) % 3], t[(k + 2) % 3]);
                let a = v[i] - v[o];
                let b = v[j] - v[o];
                let cross = a.cross(&b).norm();
                let cot = a.dot(&b) / cross;
                *edge_w.entry((i.min(j), i.max(j))).or_insert(0.0) += 0.5 * cot;
            }
        }
        let n = v.len();
        let mut clamped_edges = 0;
        let mut trip = Vec::with_capacity(4 * edge_w.len());
        for (&(i, j), &w) in &edge_w {
            let wc = if !(w >= 0.0) {
                clamped_edges += 1;
                0.0
            } else if w > MAX_COTAN_WEIGHT {
                clamped_edges += 1;
                MAX_COTAN_WEIGHT
            } else {
                w
            };
            trip.push((i, j, -wc));
            trip.push((j, i, -wc));
            trip.push((i, i, wc));
            trip.push((j, j, wc));
        }
        let stiffness = CsrMatrix::from_triplets(n, n, &trip);
        LaplaceBeltrami {
            stiffness,
            mass: mesh.vertex_areas(),
            clamped_edges,
        }
    }

    /// Positive semidefinite cotangent stiffness `W`.
    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    /// Lumped vertex areas.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Number of edges whose cotangent weight was clamped.
    pub fn clamped_edges(&self) -> usize {
        self.clamped_edges
    }

    /// `Δf = M⁻¹ Σ_j w_ij (f_j − f_i)`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let wf = self.stiffness.mul_vec(f);
        wf.iter()
            .zip(&self.mass)
            .map(|(w, m)| if *m > 0.0 { -w / m } else { 0.0 })
            .collect()
    }

    /// The operator `-M⁻¹ W` as a sparse matrix.
    pub fn operator(&self) -> CsrMatrix {
        let mut rows = Vec::with_capacity(self.mass.len());
        for (i, m) in self.mass.iter().enumerate() {
            let (cols, vals) = self.stiffness.row(i);
            let s = if *m > 0.0 { -1.0 / m } else { 0.0 };
            rows.push(cols.iter().zip(vals).map(|(&c, &v)| (c, s * v)).collect());
        }
        CsrMatrix::from_rows(self.mass.len(), rows)
    }
}
