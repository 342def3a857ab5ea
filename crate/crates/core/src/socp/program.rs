//! The per-iteration matching program
//!
//! ```text
//! minimize    Σᵢ gᵢ + (k/2) e
//! subject to  ‖base_i + Sᵢ δ‖ ≤ gᵢ                    (one cone per boundary node)
//!             ‖(2R(Φ_base + Tδ − Φ*), e − 1)‖ ≤ e + 1  (equivalent to ‖Φ − Φ*‖²_Q ≤ e)
//! ```
//!
//! in the boundary increment `δ = φ_B − Φ₀_B`. Using the increment instead
//! of `φ_B` keeps the affine data small when the base state is already close
//! to the optimum.

use std::path::Path;

use crate::condense::CondensedSystem;
use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;
use crate::mesh::{Prolongation, Vec3};

use super::metric::SpringMetric;
use super::solver::{self, ConicProblem, ConicSolution, SolverOptions};

#[derive(Debug, Clone)]
pub struct ConeProgram {
    problem: ConicProblem,
    num_boundary: usize,
    base_boundary: Vec<f64>,
    base_force: Vec<f64>,
    schur: nalgebra::DMatrix<f64>,
    k: f64,
}

/// Decoded optimum of a [`ConeProgram`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConeSolution {
    /// Optimal boundary deformation (3K, boundary order).
    pub phi_b: Vec<f64>,
    /// Condensed boundary forces at `phi_b`.
    pub forces: Vec<Vec3>,
    /// Force bounds `gᵢ`.
    pub bounds: Vec<f64>,
    /// Spring epigraph variable `e`.
    pub spring: f64,
    pub objective: f64,
    pub gap: f64,
    pub relative_gap: f64,
    pub iterations: usize,
    pub raw: ConicSolution,
}

/// Builds the program. `fine_base` holds the fine positions `Φ_base`
/// produced by the base boundary state; springs act on those vertices.
pub fn build_program(
    cs: &CondensedSystem,
    prolong: &Prolongation,
    fine_base: &[Vec3],
    metric: &SpringMetric,
    k: f64,
) -> Result<ConeProgram> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::InvalidParameter(format!("spring constant must be positive, got {k}")));
    }
    let kb = cs.num_boundary();
    if prolong.num_boundary() != kb {
        return Err(Error::Dimension {
            context: "build_program: prolongation columns vs boundary nodes",
            expected: kb,
            got: prolong.num_boundary(),
        });
    }
    if fine_base.len() != prolong.num_fine() {
        return Err(Error::Dimension {
            context: "build_program: fine base positions",
            expected: prolong.num_fine(),
            got: fine_base.len(),
        });
    }
    if let Some(bad) = metric.entries().iter().find(|e| e.vertex >= fine_base.len()) {
        return Err(Error::Dimension {
            context: "build_program: spring vertex index",
            expected: fine_base.len(),
            got: bad.vertex,
        });
    }

    let nd = 3 * kb;
    let ig = nd;
    let ie = nd + kb;
    let n = ie + 1;
    let mut c = vec![0.0; n];
    c[ig..ie].iter_mut().for_each(|v| *v = 1.0);
    c[ie] = 0.5 * k;

    let schur = cs.schur();
    let base = cs.base_force();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut h = Vec::new();
    let mut cones = Vec::with_capacity(kb + 1);
    for i in 0..kb {
        rows.push(vec![(ig + i, -1.0)]);
        h.push(0.0);
        for d in 0..3 {
            let r = 3 * i + d;
            rows.push((0..nd).filter(|&j| schur[(r, j)] != 0.0).map(|j| (j, -schur[(r, j)])).collect());
            h.push(base[r]);
        }
        cones.push(4);
    }

    rows.push(vec![(ie, -1.0)]);
    h.push(1.0);
    let p = prolong.scalar();
    for (i, entry) in metric.entries().iter().enumerate() {
        let r = metric.r(i);
        let (cols, vals) = p.row(entry.vertex);
        let resid = fine_base[entry.vertex] - entry.target;
        let hr = 2.0 * r * resid;
        for a in 0..3 {
            let mut row = Vec::with_capacity(3 * cols.len());
            for (&b, &w) in cols.iter().zip(vals) {
                for d in 0..3 {
                    let v = -2.0 * r[(a, d)] * w;
                    if v != 0.0 {
                        row.push((3 * b + d, v));
                    }
                }
            }
            rows.push(row);
            h.push(hr[a]);
        }
    }
    rows.push(vec![(ie, -1.0)]);
    h.push(-1.0);
    cones.push(3 * metric.len() + 2);

    let g = CsrMatrix::from_rows(n, rows);
    let problem = ConicProblem::new(c, CsrMatrix::zeros(0, n), Vec::new(), g, h, cones)?;
    Ok(ConeProgram {
        problem,
        num_boundary: kb,
        base_boundary: cs.base_boundary().to_vec(),
        base_force: base.to_vec(),
        schur: schur.clone(),
        k,
    })
}

impl ConeProgram {
    pub fn problem(&self) -> &ConicProblem {
        &self.problem
    }

    pub fn num_boundary(&self) -> usize {
        self.num_boundary
    }

    pub fn spring_constant(&self) -> f64 {
        self.k
    }

    pub fn write_cbf(&self, path: &Path) -> Result<()> {
        self.problem.write_cbf(path)
    }

    /// Condensed forces for a boundary increment `δ`.
    fn forces(&self, delta: &[f64]) -> Vec<Vec3> {
        let sd = &self.schur * nalgebra::DVector::from_column_slice(delta);
        (0..self.num_boundary)
            .map(|i| {
                Vec3::new(
                    self.base_force[3 * i] + sd[3 * i],
                    self.base_force[3 * i + 1] + sd[3 * i + 1],
                    self.base_force[3 * i + 2] + sd[3 * i + 2],
                )
            })
            .collect()
    }

    fn decode(&self, raw: ConicSolution) -> ConeSolution {
        let nd = 3 * self.num_boundary;
        let delta = &raw.x[..nd];
        ConeSolution {
            phi_b: delta.iter().zip(&self.base_boundary).map(|(d, b)| b + d).collect(),
            forces: self.forces(delta),
            bounds: raw.x[nd..nd + self.num_boundary].to_vec(),
            spring: raw.x[nd + self.num_boundary],
            objective: raw.primal_objective,
            gap: raw.gap,
            relative_gap: raw.relative_gap,
            iterations: raw.iterations,
            raw,
        }
    }
}

/// Solves `prog` with the interior-point method.
pub fn solve_socp(prog: &ConeProgram, tol: f64, max_iter: usize) -> Result<ConeSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("solver tolerance must be positive, got {tol}")));
    }
    let opts = SolverOptions {
        tol,
        abs_tol: tol,
        max_iter,
    };
    let raw = solver::solve(&prog.problem, &opts)?;
    Ok(prog.decode(raw))
}
