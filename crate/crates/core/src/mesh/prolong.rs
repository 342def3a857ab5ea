//! Coarse-to-fine prolongation: barycentric interpolation from the coarse
//! boundary followed by damped Jacobi smoothing on the fine surface.
//!
//! The operator acts identically on x, y and z, so it is stored as a scalar
//! matrix `P` (fine vertices × boundary nodes) and `T = P ⊗ I₃`. Boundary
//! node columns follow [`TetMesh::boundary_nodes`] order.

use std::path::Path;

use super::embed::EmbeddingMap;
use super::geometry::Vec3;
use super::laplacian::LaplaceBeltrami;
use super::TetMesh;
use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;

#[derive(Debug, Clone)]
pub struct Prolongation {
    scalar: CsrMatrix,
    steps: usize,
    damping: f64,
}

impl Prolongation {
    pub fn new(
        embed: &EmbeddingMap,
        coarse: &TetMesh,
        lb: &LaplaceBeltrami,
        steps: usize,
        damping: f64,
    ) -> Result<Self> {
        if !(damping > 0.0 && damping <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "smoothing damping must lie in (0, 1], got {damping}"
            )));
        }
        let n_fine = embed.len();
        if lb.mass().len() != n_fine {
            return Err(Error::Dimension {
                context: "Prolongation::new (Laplacian size)",
                expected: n_fine,
                got: lb.mass().len(),
            });
        }
        let k = coarse.boundary_nodes().len();
        let faces = coarse.boundary_faces();
        let mut trip = Vec::with_capacity(3 * n_fine);
        for (p, e) in embed.entries().iter().enumerate() {
            let face = faces.get(e.face).ok_or_else(|| {
                Error::Validation(format!("embedding of vertex {p} names missing face {}", e.face))
            })?;
            for (&node, &w) in face.nodes.iter().zip(&e.weights) {
                let b = coarse
                    .boundary_index(node)
                    .expect("boundary faces only reference boundary nodes");
                if w != 0.0 {
                    trip.push((p, b, w));
                }
            }
        }
        let mut scalar = CsrMatrix::from_triplets(n_fine, k, &trip);
        if steps > 0 {
            let smoother = jacobi_smoother(lb, damping);
            for _ in 0..steps {
                scalar = smoother.matmul(&scalar);
            }
        }
        Ok(Prolongation {
            scalar,
            steps,
            damping,
        })
    }

    /// Scalar interpolation matrix `P` (fine vertices × boundary nodes).
    pub fn scalar(&self) -> &CsrMatrix {
        &self.scalar
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn damping(&self) -> f64 {
        self.damping
    }

    pub fn num_fine(&self) -> usize {
        self.scalar.nrows()
    }

    pub fn num_boundary(&self) -> usize {
        self.scalar.ncols()
    }

    /// `T φ` for a flattened boundary field (length 3K) into a flattened fine
    /// field (length 3n).
    pub fn apply(&self, phi_b: &[f64]) -> Result<Vec<f64>> {
        let k = self.num_boundary();
        if phi_b.len() != 3 * k {
            return Err(Error::Dimension {
                context: "Prolongation::apply",
                expected: 3 * k,
                got: phi_b.len(),
            });
        }
        let mut out = vec![0.0; 3 * self.num_fine()];
        for p in 0..self.num_fine() {
            let (cols, vals) = self.scalar.row(p);
            let mut acc = [0.0; 3];
            for (&b, &w) in cols.iter().zip(vals) {
                for d in 0..3 {
                    acc[d] += w * phi_b[3 * b + d];
                }
            }
            out[3 * p..3 * p + 3].copy_from_slice(&acc);
        }
        Ok(out)
    }

    /// Fine positions `rest + T(φ_B − X_B)`: the rest fine surface moved by
    /// the prolonged coarse boundary displacement.
    pub fn deform(&self, fine_rest: &[Vec3], phi_b: &[f64], coarse_rest_b: &[f64]) -> Result<Vec<Vec3>> {
        if fine_rest.len() != self.num_fine() {
            return Err(Error::Dimension {
                context: "Prolongation::deform (fine vertices)",
                expected: self.num_fine(),
                got: fine_rest.len(),
            });
        }
        if coarse_rest_b.len() != phi_b.len() {
            return Err(Error::Dimension {
                context: "Prolongation::deform (rest boundary)",
                expected: phi_b.len(),
                got: coarse_rest_b.len(),
            });
        }
        let disp: Vec<f64> = phi_b.iter().zip(coarse_rest_b).map(|(a, b)| a - b).collect();
        let moved = self.apply(&disp)?;
        Ok(fine_rest
            .iter()
            .enumerate()
            .map(|(p, x)| x + Vec3::new(moved[3 * p], moved[3 * p + 1], moved[3 * p + 2]))
            .collect())
    }

    /// The full `T = P ⊗ I₃` (3n × 3K).
    pub fn expanded(&self) -> CsrMatrix {
        let mut rows = Vec::with_capacity(3 * self.num_fine());
        for p in 0..self.num_fine() {
            let (cols, vals) = self.scalar.row(p);
            for d in 0..3 {
                rows.push(cols.iter().zip(vals).map(|(&b, &w)| (3 * b + d, w)).collect());
            }
        }
        CsrMatrix::from_rows(3 * self.num_boundary(), rows)
    }

    /// Coordinate-list export of `T`.
    pub fn write_coo(&self, path: &Path) -> Result<()> {
        self.expanded().write_coo(path)
    }
}

/// One damped Jacobi sweep `u ← (1−ω)u + ω D⁻¹ A u` with the cotangent
/// adjacency `A` and its row sums `D`. Rows are convex combinations, so
/// constants are preserved exactly up to rounding.
fn jacobi_smoother(lb: &LaplaceBeltrami, damping: f64) -> CsrMatrix {
    let w = lb.stiffness();
    let n = w.nrows();
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let (cols, vals) = w.row(i);
        let total: f64 = cols
            .iter()
            .zip(vals)
            .filter(|(&c, _)| c != i)
            .map(|(_, &v)| -v)
            .sum();
        let mut row = Vec::with_capacity(cols.len() + 1);
        if total > 0.0 {
            let mut diag_done = false;
            for (&c, &v) in cols.iter().zip(vals) {
                if c == i {
                    row.push((c, 1.0 - damping));
                    diag_done = true;
                } else if v != 0.0 {
                    row.push((c, damping * -v / total));
                }
            }
            if !diag_done {
                row.push((i, 1.0 - damping));
                row.sort_by_key(|e| e.0);
            }
        } else {
            row.push((i, 1.0));
        }
        rows.push(row);
    }
    CsrMatrix::from_rows(n, rows)
}
