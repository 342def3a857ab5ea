//! Linear (P1) tetrahedral finite elements: energy, residual and tangent
//! stiffness assembly, and a Newton solver for the pure Dirichlet problem.
//!
//! Degrees of freedom are node-major: node `i` owns entries `3i..3i+3`.
//! Element gradients are constant, so one-point quadrature is exact.

use std::io::Write as _;
use std::path::Path;

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, LdlFactor};
use crate::materials::{MaterialModel, MIN_DET};
use crate::mesh::{TetMesh, Vec3};

/// Per-node 3-vectors over a tet mesh, flattened node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField(Vec<f64>);

impl NodalField {
    pub fn from_vec(v: Vec<f64>) -> Self {
        NodalField(v)
    }

    pub fn from_positions(p: &[Vec3]) -> Self {
        NodalField(p.iter().flat_map(|x| [x.x, x.y, x.z]).collect())
    }

    /// The identity map of `mesh` (rest positions).
    pub fn identity(mesh: &TetMesh) -> Self {
        Self::from_positions(mesh.nodes())
    }

    pub fn zeros(nodes: usize) -> Self {
        NodalField(vec![0.0; 3 * nodes])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn num_nodes(&self) -> usize {
        self.0.len() / 3
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn node(&self, i: usize) -> Vec3 {
        Vec3::new(self.0[3 * i], self.0[3 * i + 1], self.0[3 * i + 2])
    }

    pub fn set_node(&mut self, i: usize, p: &Vec3) {
        self.0[3 * i..3 * i + 3].copy_from_slice(p.as_slice());
    }

    pub fn to_positions(&self) -> Vec<Vec3> {
        (0..self.num_nodes()).map(|i| self.node(i)).collect()
    }

    /// Values at the mesh boundary nodes, in boundary order (length 3K).
    pub fn boundary_values(&self, mesh: &TetMesh) -> Vec<f64> {
        mesh.boundary_nodes()
            .iter()
            .flat_map(|&i| [self.0[3 * i], self.0[3 * i + 1], self.0[3 * i + 2]])
            .collect()
    }

    /// Overwrites the boundary nodes from a boundary-ordered vector.
    pub fn set_boundary_values(&mut self, mesh: &TetMesh, values: &[f64]) -> Result<()> {
        let k = mesh.boundary_nodes().len();
        if values.len() != 3 * k {
            return Err(Error::Dimension {
                context: "NodalField::set_boundary_values",
                expected: 3 * k,
                got: values.len(),
            });
        }
        for (b, &i) in mesh.boundary_nodes().iter().enumerate() {
            self.0[3 * i..3 * i + 3].copy_from_slice(&values[3 * b..3 * b + 3]);
        }
        Ok(())
    }
}

/// Tangent stiffness and zero-order residual of the linearization at Φ₀.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    /// Symmetric 3N × 3N tangent stiffness.
    pub tangent: CsrMatrix,
    /// Residual `∂E/∂Φ` at Φ₀ (internal nodal forces).
    pub residual: Vec<f64>,
    /// Total stored energy at Φ₀.
    pub energy: f64,
}

/// Mesh-dependent data reused across assemblies: shape function gradients,
/// volumes, and the tangent sparsity pattern with element scatter slots.
#[derive(Debug, Clone)]
pub struct FemSpace {
    mesh: TetMesh,
    grads: Vec<[Vec3; 4]>,
    volumes: Vec<f64>,
    pattern: CsrMatrix,
    slots: Vec<[usize; 144]>,
    interior_dofs: Vec<usize>,
    boundary_dofs: Vec<usize>,
    /// Global DOF → interior-local index (`usize::MAX` on the boundary).
    interior_map: Vec<usize>,
}

impl FemSpace {
    pub fn new(mesh: &TetMesh) -> Self {
        let nodes = mesh.nodes();
        let mut grads = Vec::with_capacity(mesh.num_tets());
        let mut volumes = Vec::with_capacity(mesh.num_tets());
        for t in mesh.tets() {
            let x0 = nodes[t[0]];
            let dm = Matrix3::from_columns(&[nodes[t[1]] - x0, nodes[t[2]] - x0, nodes[t[3]] - x0]);
            let inv = dm.try_inverse().expect("tets have positive volume");
            let g1 = inv.row(0).transpose();
            let g2 = inv.row(1).transpose();
            let g3 = inv.row(2).transpose();
            grads.push([-(g1 + g2 + g3), g1, g2, g3]);
            volumes.push(dm.determinant() / 6.0);
        }

        let n = mesh.num_nodes();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for t in mesh.tets() {
            for &a in t {
                adj[a].extend_from_slice(t);
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        let mut rows = Vec::with_capacity(3 * n);
        for a in &adj {
            for _ in 0..3 {
                rows.push(
                    a.iter()
                        .flat_map(|&b| (0..3).map(move |d| (3 * b + d, 0.0)))
                        .collect::<Vec<_>>(),
                );
            }
        }
        let pattern = CsrMatrix::from_rows(3 * n, rows);
        let slots = mesh
            .tets()
            .iter()
            .map(|t| {
                let mut s = [0usize; 144];
                for a in 0..4 {
                    for m in 0..3 {
                        for b in 0..4 {
                            for q in 0..3 {
                                s[(3 * a + m) * 12 + 3 * b + q] = pattern
                                    .position(3 * t[a] + m, 3 * t[b] + q)
                                    .expect("pattern covers element couplings");
                            }
                        }
                    }
                }
                s
            })
            .collect();

        let interior_dofs: Vec<usize> = mesh
            .interior_nodes()
            .iter()
            .flat_map(|&i| [3 * i, 3 * i + 1, 3 * i + 2])
            .collect();
        let boundary_dofs: Vec<usize> = mesh
            .boundary_nodes()
            .iter()
            .flat_map(|&i| [3 * i, 3 * i + 1, 3 * i + 2])
            .collect();
        let mut interior_map = vec![usize::MAX; 3 * n];
        for (k, &d) in interior_dofs.iter().enumerate() {
            interior_map[d] = k;
        }
        FemSpace {
            mesh: mesh.clone(),
            grads,
            volumes,
            pattern,
            slots,
            interior_dofs,
            boundary_dofs,
            interior_map,
        }
    }

    pub fn mesh(&self) -> &TetMesh {
        &self.mesh
    }

    pub fn num_dofs(&self) -> usize {
        3 * self.mesh.num_nodes()
    }

    pub fn interior_dofs(&self) -> &[usize] {
        &self.interior_dofs
    }

    pub fn boundary_dofs(&self) -> &[usize] {
        &self.boundary_dofs
    }

    /// Reference-configuration shape function gradients of tet `e`.
    pub fn gradients(&self, e: usize) -> &[Vec3; 4] {
        &self.grads[e]
    }

    pub fn volume(&self, e: usize) -> f64 {
        self.volumes[e]
    }

    /// Deformation gradient of tet `e` under `phi`.
    pub fn deformation_gradient(&self, phi: &NodalField, e: usize) -> Matrix3<f64> {
        let t = &self.mesh.tets()[e];
        let g = &self.grads[e];
        let mut f = Matrix3::zeros();
        for a in 0..4 {
            f += phi.node(t[a]) * g[a].transpose();
        }
        f
    }

    /// Tets whose deformation gradient determinant falls below the
    /// admissible threshold.
    pub fn flipped_tets(&self, phi: &NodalField) -> Vec<usize> {
        (0..self.mesh.num_tets())
            .filter(|&e| !(self.deformation_gradient(phi, e).determinant() >= MIN_DET))
            .collect()
    }

    fn check_len(&self, phi: &NodalField, context: &'static str) -> Result<()> {
        if phi.len() != self.num_dofs() {
            return Err(Error::Dimension {
                context,
                expected: self.num_dofs(),
                got: phi.len(),
            });
        }
        Ok(())
    }

    fn check_orientation(&self, model: &MaterialModel, phi: &NodalField) -> Result<()> {
        if !model.is_linear() {
            let flipped = self.flipped_tets(phi);
            if !flipped.is_empty() {
                return Err(Error::Flipped { tets: flipped });
            }
        }
        Ok(())
    }

    /// Total stored energy `Σ_e vol_e Ŵ(F_e)`.
    pub fn energy(&self, model: &MaterialModel, phi: &NodalField) -> Result<f64> {
        self.check_len(phi, "FemSpace::energy")?;
        self.check_orientation(model, phi)?;
        let mut total = 0.0;
        for e in 0..self.mesh.num_tets() {
            total += self.volumes[e] * model.energy(&self.deformation_gradient(phi, e))?;
        }
        Ok(total)
    }

    /// Residual (internal nodal forces) only.
    pub fn residual(&self, model: &MaterialModel, phi: &NodalField) -> Result<Vec<f64>> {
        self.check_len(phi, "FemSpace::residual")?;
        self.check_orientation(model, phi)?;
        let mut r = vec![0.0; self.num_dofs()];
        for (e, t) in self.mesh.tets().iter().enumerate() {
            let p = model.first_pk(&self.deformation_gradient(phi, e))?;
            for a in 0..4 {
                let f = self.volumes[e] * (p * self.grads[e][a]);
                for m in 0..3 {
                    r[3 * t[a] + m] += f[m];
                }
            }
        }
        Ok(r)
    }

    /// Energy, residual and tangent stiffness at `phi`.
    pub fn assemble(&self, model: &MaterialModel, phi: &NodalField) -> Result<AssembledSystem> {
        self.check_len(phi, "FemSpace::assemble")?;
        self.check_orientation(model, phi)?;
        let mut tangent = self.pattern.clone();
        let mut residual = vec![0.0; self.num_dofs()];
        let mut energy = 0.0;
        {
            let values = tangent.values_mut();
            for (e, t) in self.mesh.tets().iter().enumerate() {
                let f = self.deformation_gradient(phi, e);
                let (w, p, a) = model.evaluate(&f)?;
                let vol = self.volumes[e];
                let g = &self.grads[e];
                energy += vol * w;
                for na in 0..4 {
                    let force = vol * (p * g[na]);
                    for m in 0..3 {
                        residual[3 * t[na] + m] += force[m];
                    }
                }
                // ag[b][(3m + j, q)] = Σ_l A[(3m+j, 3q+l)] g_b[l]
                let mut ag = [[[0.0f64; 3]; 9]; 4];
                for (b, gb) in g.iter().enumerate() {
                    for row in 0..9 {
                        for q in 0..3 {
                            ag[b][row][q] = a[(row, 3 * q)] * gb[0]
                                + a[(row, 3 * q + 1)] * gb[1]
                                + a[(row, 3 * q + 2)] * gb[2];
                        }
                    }
                }
                let slots = &self.slots[e];
                for (na, ga) in g.iter().enumerate() {
                    for m in 0..3 {
                        for b in 0..4 {
                            for q in 0..3 {
                                let k = vol
                                    * (ga[0] * ag[b][3 * m][q]
                                        + ga[1] * ag[b][3 * m + 1][q]
                                        + ga[2] * ag[b][3 * m + 2][q]);
                                values[slots[(3 * na + m) * 12 + 3 * b + q]] += k;
                            }
                        }
                    }
                }
            }
        }
        Ok(AssembledSystem {
            tangent,
            residual,
            energy,
        })
    }

    /// `K_II` block of a tangent.
    pub fn interior_block(&self, tangent: &CsrMatrix) -> CsrMatrix {
        tangent.select(&self.interior_dofs, &self.interior_map, self.interior_dofs.len())
    }

    /// Default Newton tolerance: `1e-8 · stress scale · (mean tet volume)^(2/3)`.
    pub fn default_tolerance(&self, model: &MaterialModel) -> f64 {
        1e-8 * model.stress_scale() * self.mesh.mean_tet_volume().powf(2.0 / 3.0)
    }
}

/// Convenience wrapper building a [`FemSpace`] for a single assembly.
pub fn assemble(mesh: &TetMesh, model: &MaterialModel, phi0: &NodalField) -> Result<AssembledSystem> {
    FemSpace::new(mesh).assemble(model, phi0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Interior residual ∞-norm target; `None` selects the mesh default.
    pub tol: Option<f64>,
    pub max_iter: usize,
    /// Line search gives up below this step length.
    pub min_step: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: None,
            max_iter: 50,
            min_step: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonReport {
    pub phi: NodalField,
    /// Linear solves performed.
    pub iterations: usize,
    /// Interior residual ∞-norm before each iteration and at exit.
    pub history: Vec<f64>,
    /// Number of step halvings performed by the line search.
    pub step_cuts: usize,
    /// Factorizations that needed the diagonal shift.
    pub shifted_solves: usize,
    /// Load increments used (1 when the direct solve succeeded).
    pub load_steps: usize,
}

fn inf_norm_at(v: &[f64], idx: &[usize]) -> f64 {
    idx.iter().fold(0.0f64, |m, &i| m.max(v[i].abs()))
}

/// Newton-Raphson for the pure Dirichlet problem: boundary nodes are set to
/// `dirichlet` (boundary order, length 3K) and interior nodes are solved to
/// equilibrium starting from `phi_init`.
///
/// Each step solves the interior block of the tangent system and is
/// globalized by halving while the energy increases or an element flips.
pub fn newton_solve(
    space: &FemSpace,
    model: &MaterialModel,
    dirichlet: &[f64],
    phi_init: &NodalField,
    opts: &NewtonOptions,
) -> Result<NewtonReport> {
    let mesh = space.mesh();
    if phi_init.len() != space.num_dofs() {
        return Err(Error::Dimension {
            context: "newton_solve (initial field)",
            expected: space.num_dofs(),
            got: phi_init.len(),
        });
    }
    let mut phi = phi_init.clone();
    phi.set_boundary_values(mesh, dirichlet)?;
    let tol = opts.tol.unwrap_or_else(|| space.default_tolerance(model));
    let interior = space.interior_dofs();
    let energy_floor = 1e-14 * model.stress_scale() * mesh.total_volume();

    let mut history = Vec::new();
    let mut step_cuts = 0;
    let mut shifted_solves = 0;
    let mut cached: Option<LdlFactor> = None;
    for it in 0..=opts.max_iter {
        let sys = space.assemble(model, &phi)?;
        let res = inf_norm_at(&sys.residual, interior);
        history.push(res);
        if res < tol || interior.is_empty() {
            return Ok(NewtonReport {
                phi,
                iterations: it,
                history,
                step_cuts,
                shifted_solves,
                load_steps: 1,
            });
        }
        if it == opts.max_iter {
            break;
        }
        let factor = match cached.take() {
            Some(f) => f,
            None => {
                let f = LdlFactor::new_with_fallback_shift(&space.interior_block(&sys.tangent), "K_II")?;
                if f.shift() != 0.0 {
                    shifted_solves += 1;
                }
                f
            }
        };
        let rhs: Vec<f64> = interior.iter().map(|&d| -sys.residual[d]).collect();
        let dx = factor.solve(&rhs);
        if model.is_linear() {
            // Constant tangent: reuse the factorization.
            cached = Some(factor);
        }

        let mut step = 1.0;
        loop {
            let mut trial = phi.clone();
            for (k, &d) in interior.iter().enumerate() {
                trial.0[d] += step * dx[k];
            }
            let accept = match space.energy(model, &trial) {
                Ok(e) => e <= sys.energy + 1e-12 * sys.energy.abs() + energy_floor,
                Err(Error::Flipped { .. }) | Err(Error::Domain { .. }) => false,
                Err(e) => return Err(e),
            };
            if accept {
                phi = trial;
                break;
            }
            step *= 0.5;
            step_cuts += 1;
            if step < opts.min_step {
                return Err(Error::LineSearch { iteration: it, step });
            }
        }
    }
    Err(Error::NewtonNotConverged {
        last: Box::new(phi),
        history,
    })
}

/// Linearized prediction of the interior nodes when the boundary moves from
/// its values in `from` to `dirichlet`:
/// `Φ_I = Φ_I⁰ − K_II⁻¹ (r_I + K_IB ΔΦ_B)`.
pub fn linear_predictor(
    space: &FemSpace,
    model: &MaterialModel,
    from: &NodalField,
    dirichlet: &[f64],
) -> Result<NodalField> {
    let mesh = space.mesh();
    let sys = space.assemble(model, from)?;
    let mut delta = vec![0.0; space.num_dofs()];
    let base_b = from.boundary_values(mesh);
    if base_b.len() != dirichlet.len() {
        return Err(Error::Dimension {
            context: "linear_predictor",
            expected: base_b.len(),
            got: dirichlet.len(),
        });
    }
    for (k, &d) in space.boundary_dofs().iter().enumerate() {
        delta[d] = dirichlet[k] - base_b[k];
    }
    let kd = sys.tangent.mul_vec(&delta);
    let mut out = from.clone();
    out.set_boundary_values(mesh, dirichlet)?;
    let interior = space.interior_dofs();
    if !interior.is_empty() {
        let factor = LdlFactor::new_with_fallback_shift(&space.interior_block(&sys.tangent), "K_II")?;
        let rhs: Vec<f64> = interior.iter().map(|&d| -(sys.residual[d] + kd[d])).collect();
        let dx = factor.solve(&rhs);
        for (k, &d) in interior.iter().enumerate() {
            out.0[d] += dx[k];
        }
    }
    Ok(out)
}

/// Moves the boundary from its values in the equilibrium state `start` to
/// `dirichlet`, re-equilibrating the interior.
///
/// Tries a single linearized prediction followed by Newton; if that fails
/// (inverted start, stalled line search, no convergence) the boundary motion
/// is split into increments, each bisected again on failure.
pub fn solve_equilibrium(
    space: &FemSpace,
    model: &MaterialModel,
    start: &NodalField,
    dirichlet: &[f64],
    opts: &NewtonOptions,
) -> Result<NewtonReport> {
    const MAX_DEPTH: u32 = 8;
    let mesh = space.mesh();
    let b0 = start.boundary_values(mesh);
    if b0.len() != dirichlet.len() {
        return Err(Error::Dimension {
            context: "solve_equilibrium",
            expected: b0.len(),
            got: dirichlet.len(),
        });
    }
    let mut state = start.clone();
    let mut done = 0.0f64;
    let mut incr = 1.0f64;
    let mut total = NewtonReport {
        phi: start.clone(),
        iterations: 0,
        history: Vec::new(),
        step_cuts: 0,
        shifted_solves: 0,
        load_steps: 0,
    };
    let mut last_err = None;
    while done < 1.0 {
        let s = (done + incr).min(1.0);
        let target: Vec<f64> = if s == 1.0 {
            dirichlet.to_vec()
        } else {
            b0.iter().zip(dirichlet).map(|(a, b)| a + s * (b - a)).collect()
        };
        let attempt = linear_predictor(space, model, &state, &target).and_then(|guess| {
            let guess = if model.is_linear() || space.flipped_tets(&guess).is_empty() {
                guess
            } else {
                // Prediction inverted elements; keep the previous interior.
                let mut g = state.clone();
                g.set_boundary_values(mesh, &target)?;
                g
            };
            newton_solve(space, model, &target, &guess, opts)
        });
        match attempt {
            Ok(rep) => {
                total.iterations += rep.iterations;
                total.history.extend_from_slice(&rep.history);
                total.step_cuts += rep.step_cuts;
                total.shifted_solves += rep.shifted_solves;
                total.load_steps += 1;
                state = rep.phi;
                done = s;
                // Grow the increment back after a success.
                incr = (incr * 2.0).min(1.0);
            }
            Err(e) => {
                let recoverable = matches!(
                    e,
                    Error::Flipped { .. }
                        | Error::LineSearch { .. }
                        | Error::NewtonNotConverged { .. }
                        | Error::Domain { .. }
                        | Error::Factorization { .. }
                );
                if !recoverable || incr < 0.5f64.powi(MAX_DEPTH as i32) {
                    last_err = Some(e);
                    break;
                }
                incr *= 0.5;
            }
        }
    }
    if let Some(e) = last_err {
        return Err(e);
    }
    total.phi = state;
    Ok(total)
}

/// Writes `iteration,residual` rows.
pub fn write_residual_history(path: &Path, history: &[f64]) -> Result<()> {
    let mut s = Vec::new();
    let _ = writeln!(s, "iteration,residual");
    for (i, r) in history.iter().enumerate() {
        let _ = writeln!(s, "{i},{r:.16e}");
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}
