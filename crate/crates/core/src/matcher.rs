//! The outer two-scale matching loop.
//!
//! One iteration:
//! 1. correspondences from the current fine surface to the target,
//! 2. assembly and condensation at the current coarse equilibrium,
//! 3. the cone program for the new boundary deformation,
//! 4. Newton re-equilibration of the interior with that boundary,
//! 5. prolongation of the boundary to the fine surface,
//! 6. schedule updates for the spring constant and the metric ratio.
//!
//! Lengths are rescaled internally by a power of two close to the coarse
//! bounding-box diagonal, so the rescaling itself is exact. Reported forces
//! are in these nondimensional units.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Matrix3;

use crate::condense::condense;
use crate::descriptors::{default_times, hks, spectral_basis, CorrespondenceSet, HksField, TargetIndex};
use crate::error::{Error, Result};
use crate::fem::{solve_equilibrium, FemSpace, NewtonOptions, NewtonReport, NodalField};
use crate::materials::MaterialModel;
use crate::mesh::{embed_surface, EmbeddingMap, LaplaceBeltrami, Prolongation, SurfaceMesh, TetMesh, Vec3};
use crate::socp::{build_metric, build_program, solve_socp, ConeSolution};

/// Outer-loop settings. Keys and defaults are documented in
/// [`crate::config::KEYS`].
#[derive(Debug, Clone, PartialEq)]
pub struct MatchConfig {
    pub material: String,
    pub lambda: f64,
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
    pub k_initial: f64,
    pub k_growth: f64,
    /// Tangential over normal metric weight `λ_t / λ_n`.
    pub ratio_initial: f64,
    pub ratio_decay: f64,
    pub ratio_floor: f64,
    pub descriptor_iterations: usize,
    pub knn_fraction: f64,
    pub confidence_threshold: f64,
    pub hks_eigenpairs: usize,
    pub hks_samples: usize,
    pub smoothing_steps: usize,
    pub smoothing_damping: f64,
    pub max_iterations: usize,
    pub spring_tol: f64,
    pub stagnation_tol: f64,
    pub stagnation_window: usize,
    pub socp_tol: f64,
    pub socp_max_iter: usize,
    pub newton: NewtonOptions,
    pub normalize: bool,
    pub threads: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Spring residual below tolerance.
    Converged,
    /// Force norm stopped changing.
    Stagnated,
    IterationCap,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::Stagnated => "stagnated",
            Termination::IterationCap => "iteration_cap",
        }
    }

    /// Process exit status for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Termination::Converged => 0,
            Termination::Stagnated | Termination::IterationCap => 2,
        }
    }
}

/// One row of the iteration log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub iteration: usize,
    /// `Σᵢ ‖fᵢ‖` of the boundary reaction forces after re-equilibration.
    pub force_l1: f64,
    /// Area-weighted RMS distance of the fine surface to the target.
    pub spring_residual: f64,
    pub newton_iters: usize,
    pub socp_gap: f64,
    pub socp_iters: usize,
    pub k: f64,
    pub lambda_ratio: f64,
    /// Correspondences with nonzero confidence.
    pub active: usize,
    /// `Σᵢ ‖fᵢ‖` of the optimized condensed forces, as predicted by the
    /// linearization at the start of the iteration.
    pub predicted_l1: f64,
}

pub const LOG_HEADER: &str =
    "iteration,force_l1,spring_residual,newton_iters,socp_gap,k,lambda_ratio,socp_iters,active,predicted_l1";

impl LogRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{:.16e},{:.16e},{},{:.16e},{:.16e},{:.16e},{},{},{:.16e}",
            self.iteration,
            self.force_l1,
            self.spring_residual,
            self.newton_iters,
            self.socp_gap,
            self.k,
            self.lambda_ratio,
            self.socp_iters,
            self.active,
            self.predicted_l1
        )
    }

    pub fn from_csv(line: &str) -> Option<LogRow> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 10 {
            return None;
        }
        Some(LogRow {
            iteration: f[0].parse().ok()?,
            force_l1: f[1].parse().ok()?,
            spring_residual: f[2].parse().ok()?,
            newton_iters: f[3].parse().ok()?,
            socp_gap: f[4].parse().ok()?,
            k: f[5].parse().ok()?,
            lambda_ratio: f[6].parse().ok()?,
            socp_iters: f[7].parse().ok()?,
            active: f[8].parse().ok()?,
            predicted_l1: f[9].parse().ok()?,
        })
    }
}

pub fn write_log_csv(path: &Path, rows: &[LogRow]) -> Result<()> {
    let mut s = String::from(LOG_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.to_csv());
        s.push('\n');
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_log_csv(path: &Path) -> Result<Vec<LogRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == LOG_HEADER => {}
        _ => return Err(Error::parse(path, 1, "unexpected log header")),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| LogRow::from_csv(l).ok_or_else(|| Error::parse(path, i + 1, "malformed log row")))
        .collect()
}

/// Loop state, in nondimensional units.
#[derive(Debug, Clone)]
pub struct MatchState {
    /// Completed iterations.
    pub iteration: usize,
    /// Coarse deformation of all nodes.
    pub phi: NodalField,
    /// Fine surface positions, always `T` applied to the boundary of `phi`.
    pub fine: Vec<Vec3>,
    pub correspondences: Option<CorrespondenceSet>,
    pub log: Vec<LogRow>,
    pub k: f64,
    pub ratio: f64,
    /// Boundary reactions of the last iteration, boundary order.
    pub forces: Vec<Vec3>,
}

/// Aborted run: the failing stage, the error, and the last valid state.
#[derive(Debug)]
pub struct MatchAbort {
    pub stage: String,
    /// Outer iteration (1-based) that failed.
    pub iteration: usize,
    pub source: Error,
    pub state: Option<MatchState>,
}

#[derive(Debug, Clone)]
pub struct MatchResult {
    /// Final fine surface, original units.
    pub fine_deformation: Vec<Vec3>,
    /// Final coarse deformation, original units.
    pub coarse_deformation: NodalField,
    /// Boundary reaction forces in boundary-node order, original units.
    pub forces: Vec<Vec3>,
    /// Forces pulled back through the nodal deformation gradient.
    pub pulled_back: Vec<Vec3>,
    pub log: Vec<LogRow>,
    pub termination: Termination,
    /// Final nondimensional state, usable to warm-start the next run.
    pub state: MatchState,
}

/// Data passed to the per-iteration observer.
pub struct IterationView<'a> {
    pub row: &'a LogRow,
    /// Fine surface, original units.
    pub fine: &'a [Vec3],
    /// Coarse deformation, original units.
    pub coarse: &'a NodalField,
}

/// `Σᵢ ‖fᵢ‖`.
pub fn force_l1(forces: &[Vec3]) -> f64 {
    forces.iter().map(|f| f.norm()).sum()
}

/// Volume-weighted average deformation gradient over the tets incident to
/// each boundary node, in boundary order.
fn nodal_gradients(space: &FemSpace, phi: &NodalField) -> Vec<Matrix3<f64>> {
    let mesh = space.mesh();
    let mut acc = vec![Matrix3::zeros(); mesh.num_nodes()];
    let mut vol = vec![0.0; mesh.num_nodes()];
    for (e, tet) in mesh.tets().iter().enumerate() {
        let f = space.deformation_gradient(phi, e);
        let v = space.volume(e);
        for &n in tet {
            acc[n] += v * f;
            vol[n] += v;
        }
    }
    mesh.boundary_nodes().iter().map(|&n| acc[n] / vol[n]).collect()
}

/// Pulls boundary forces back to the reference configuration:
/// `F_avg⁻¹ fᵢ` per boundary node.
pub fn pullback_forces(forces: &[Vec3], phi: &NodalField, mesh: &TetMesh) -> Result<Vec<Vec3>> {
    pullback_with(&FemSpace::new(mesh), forces, phi)
}

fn pullback_with(space: &FemSpace, forces: &[Vec3], phi: &NodalField) -> Result<Vec<Vec3>> {
    let mesh = space.mesh();
    if forces.len() != mesh.boundary_nodes().len() {
        return Err(Error::Dimension {
            context: "pullback_forces",
            expected: mesh.boundary_nodes().len(),
            got: forces.len(),
        });
    }
    if phi.len() != space.num_dofs() {
        return Err(Error::Dimension {
            context: "pullback_forces (deformation)",
            expected: space.num_dofs(),
            got: phi.len(),
        });
    }
    let grads = nodal_gradients(space, phi);
    grads
        .iter()
        .zip(forces)
        .zip(mesh.boundary_nodes())
        .map(|((f, force), &node)| {
            let det = f.determinant();
            let scale = f.norm().powi(3);
            if !(det.abs() > 1e-12 * scale) {
                return Err(Error::Validation(format!(
                    "singular averaged deformation gradient at node {node} (det {det:e})"
                )));
            }
            let lu = f.lu();
            lu.solve(force).ok_or_else(|| {
                Error::Validation(format!("singular averaged deformation gradient at node {node}"))
            })
        })
        .collect()
}

/// Prepared matching problem for one source and coarse mesh; can be run
/// against several targets.
pub struct Matcher {
    config: MatchConfig,
    model: MaterialModel,
    scale: f64,
    source: SurfaceMesh,
    source_orig: SurfaceMesh,
    coarse_orig: TetMesh,
    space: FemSpace,
    embedding: EmbeddingMap,
    prolong: Prolongation,
    coarse_rest_b: Vec<f64>,
    coarse_rest_b_orig: Vec<f64>,
    spring_weights: Vec<f64>,
    source_hks: Option<HksField>,
    hks_times: Vec<f64>,
}

/// `iteration` is the 0-based loop index; the error reports it 1-based like the log.
fn abort(stage: &str, iteration: usize, source: Error, state: Option<&MatchState>) -> Error {
    Error::MatchAborted(Box::new(MatchAbort {
        stage: stage.into(),
        iteration: iteration + 1,
        source,
        state: state.cloned(),
    }))
}

/// Power of two nearest to `x` in log scale.
fn pow2_near(x: f64) -> f64 {
    2f64.powi(x.log2().round() as i32)
}

impl Matcher {
    pub fn new(config: &MatchConfig, source: &SurfaceMesh, coarse: &TetMesh) -> Result<Self> {
        config.validate()?;
        let model = config.material_model()?;
        let (lo, hi) = coarse.bounding_box();
        let diag = (hi - lo).norm();
        let scale = if config.normalize { pow2_near(diag) } else { 1.0 };
        let inv = 1.0 / scale;
        let source_nd = source.scaled(inv);
        let coarse_nd = coarse.scaled(inv);
        let space = FemSpace::new(&coarse_nd);
        let embedding = embed_surface(&source_nd, &coarse_nd)?;
        let lb = LaplaceBeltrami::new(&source_nd);
        let prolong = Prolongation::new(&embedding, &coarse_nd, &lb, config.smoothing_steps, config.smoothing_damping)?;
        let coarse_rest_b = NodalField::identity(&coarse_nd).boundary_values(&coarse_nd);
        let coarse_rest_b_orig = NodalField::identity(coarse).boundary_values(coarse);

        let areas = source_nd.vertex_areas();
        let total: f64 = areas.iter().sum();
        let factor = model.stress_scale() * coarse_nd.boundary_area() / total;
        let spring_weights = areas.iter().map(|a| a * factor).collect();

        let (source_hks, hks_times) = if config.descriptor_iterations > 0 {
            let m = config.hks_eigenpairs.min(source_nd.num_vertices());
            let basis = spectral_basis(&source_nd, m)?;
            let times = default_times(&basis, config.hks_samples)?;
            (Some(hks(&basis, &times)?), times)
        } else {
            (None, Vec::new())
        };
        Ok(Matcher {
            config: config.clone(),
            model,
            scale,
            source: source_nd,
            source_orig: source.clone(),
            coarse_orig: coarse.clone(),
            space,
            embedding,
            prolong,
            coarse_rest_b,
            coarse_rest_b_orig,
            spring_weights,
            source_hks,
            hks_times,
        })
    }

    pub fn config(&self) -> &MatchConfig {
        &self.config
    }

    pub fn model(&self) -> &MaterialModel {
        &self.model
    }

    /// Internal length unit in original coordinates.
    pub fn length_scale(&self) -> f64 {
        self.scale
    }

    pub fn embedding(&self) -> &EmbeddingMap {
        &self.embedding
    }

    pub fn prolongation(&self) -> &Prolongation {
        &self.prolong
    }

    pub fn space(&self) -> &FemSpace {
        &self.space
    }

    /// Identity state with the schedules at their initial values.
    pub fn initial_state(&self) -> MatchState {
        MatchState {
            iteration: 0,
            phi: NodalField::identity(self.space.mesh()),
            fine: self.source.vertices().to_vec(),
            correspondences: None,
            log: Vec::new(),
            k: self.config.k_initial,
            ratio: self.config.ratio_initial,
            forces: Vec::new(),
        }
    }

    /// State continuing from the deformation `phi` (nondimensional) with
    /// fresh schedules and log.
    pub fn state_from(&self, phi: &NodalField) -> Result<MatchState> {
        let mut s = self.initial_state();
        if phi.len() != s.phi.len() {
            return Err(Error::Dimension {
                context: "Matcher::state_from",
                expected: s.phi.len(),
                got: phi.len(),
            });
        }
        s.phi = phi.clone();
        s.fine = self.fine_nd(&phi.boundary_values(self.space.mesh()))?;
        Ok(s)
    }

    fn fine_nd(&self, phi_b: &[f64]) -> Result<Vec<Vec3>> {
        self.prolong.deform(self.source.vertices(), phi_b, &self.coarse_rest_b)
    }

    /// Coarse deformation in original units.
    pub fn coarse_original(&self, phi: &NodalField) -> NodalField {
        NodalField::from_vec(phi.as_slice().iter().map(|v| v * self.scale).collect())
    }

    /// Fine surface in original units for a nondimensional coarse state:
    /// `T` applied to the original-unit boundary deformation.
    pub fn fine_original(&self, phi: &NodalField) -> Result<Vec<Vec3>> {
        let orig = self.coarse_original(phi);
        let b = orig.boundary_values(&self.coarse_orig);
        self.prolong.deform(self.source_orig.vertices(), &b, &self.coarse_rest_b_orig)
    }

    /// Boundary reaction forces at an equilibrium state.
    pub fn boundary_forces(&self, phi: &NodalField) -> Result<Vec<Vec3>> {
        let r = self.space.residual(&self.model, phi)?;
        Ok(self
            .space
            .mesh()
            .boundary_nodes()
            .iter()
            .map(|&n| Vec3::new(r[3 * n], r[3 * n + 1], r[3 * n + 2]))
            .collect())
    }

    fn spring_residual(&self, index: &TargetIndex, fine: &[Vec3]) -> f64 {
        let cp = index.closest_points(fine);
        let (mut num, mut den) = (0.0, 0.0);
        for ((p, c), w) in fine.iter().zip(cp.entries()).zip(&self.spring_weights) {
            num += w * (p - c.target).norm_squared();
            den += w;
        }
        (num / den).sqrt()
    }

    pub fn run(&self, target: &SurfaceMesh) -> Result<MatchResult> {
        self.run_from(target, self.initial_state(), |_| Ok(()))
    }

    /// Runs the loop from `state`, calling `observe` after every iteration.
    pub fn run_from(
        &self,
        target: &SurfaceMesh,
        mut state: MatchState,
        mut observe: impl FnMut(&IterationView) -> Result<()>,
    ) -> Result<MatchResult> {
        let cfg = &self.config;
        let target_nd = target.scaled(1.0 / self.scale);
        let index = TargetIndex::new(&target_nd).map_err(|e| abort("setup", state.iteration, e, None))?;
        let target_hks = match &self.source_hks {
            Some(_) => {
                let m = cfg.hks_eigenpairs.min(target_nd.num_vertices());
                let basis = spectral_basis(&target_nd, m).map_err(|e| abort("descriptors", 0, e, None))?;
                Some(hks(&basis, &self.hks_times).map_err(|e| abort("descriptors", 0, e, None))?)
            }
            None => None,
        };
        let knn = ((cfg.knn_fraction * target_nd.num_vertices() as f64).round() as usize).max(1);
        let mesh = self.space.mesh();

        let termination = loop {
            let it = state.iteration;
            // (1) correspondences
            let use_hks = it < cfg.descriptor_iterations && knn > 1;
            let mut corr = match (&self.source_hks, &target_hks) {
                (Some(sh), Some(th)) if use_hks => index
                    .find(&state.fine, sh, th, knn, cfg.confidence_threshold)
                    .map_err(|e| abort("correspondence", it, e, Some(&state)))?,
                _ => index.closest_points(&state.fine),
            };
            if corr.active() == 0 {
                corr = index.closest_points(&state.fine);
            }

            // (2) assemble and condense
            let sys = self
                .space
                .assemble(&self.model, &state.phi)
                .map_err(|e| abort("assemble", it, e, Some(&state)))?;
            let cs = condense(&self.space, &sys, &state.phi).map_err(|e| abort("condense", it, e, Some(&state)))?;

            // (3) cone program
            let mut metric = build_metric(&corr.spring_points(), 1.0, state.ratio, &corr.confidences())
                .map_err(|e| abort("metric", it, e, Some(&state)))?;
            metric.scale_weights(|v| self.spring_weights[v]);
            let prog = build_program(&cs, &self.prolong, &state.fine, &metric, state.k)
                .map_err(|e| abort("program", it, e, Some(&state)))?;
            let sol = match solve_socp(&prog, cfg.socp_tol, cfg.socp_max_iter) {
                Ok(s) => s,
                Err(Error::SocpMaxIterations { best, iterations, gap })
                    if best.primal_infeasibility < 1e-5 && best.dual_infeasibility < 1e-5 =>
                {
                    let _ = (iterations, gap);
                    let raw = *best;
                    decode_fallback(&cs, raw)
                }
                Err(e) => return Err(abort("socp", it, e, Some(&state))),
            };

            // (4) re-equilibrate, shortening the step if Newton cannot follow
            let base_b = state.phi.boundary_values(mesh);
            let mut frac = 1.0;
            let report: NewtonReport = loop {
                let target_b: Vec<f64> = base_b
                    .iter()
                    .zip(&sol.phi_b)
                    .map(|(b, p)| b + frac * (p - b))
                    .collect();
                match solve_equilibrium(&self.space, &self.model, &state.phi, &target_b, &cfg.newton) {
                    Ok(r) => break r,
                    Err(e) if frac > 1.0 / 16.0 && newton_recoverable(&e) => frac *= 0.5,
                    Err(e) => return Err(abort("newton", it, e, Some(&state))),
                }
            };

            // (5) prolong
            let phi_b = report.phi.boundary_values(mesh);
            let fine = self.fine_nd(&phi_b).map_err(|e| abort("prolong", it, e, Some(&state)))?;
            let forces = cs
                .boundary_force(&phi_b)
                .map_err(|e| abort("forces", it, e, Some(&state)))?;
            let reactions = self
                .boundary_forces(&report.phi)
                .map_err(|e| abort("forces", it, e, Some(&state)))?;
            let row = LogRow {
                iteration: it + 1,
                force_l1: force_l1(&reactions),
                predicted_l1: force_l1(&forces),
                spring_residual: self.spring_residual(&index, &fine),
                newton_iters: report.iterations,
                socp_gap: sol.gap,
                socp_iters: sol.iterations,
                k: state.k,
                lambda_ratio: state.ratio,
                active: corr.active(),
            };
            state.phi = report.phi;
            state.fine = fine;
            state.correspondences = Some(corr);
            state.forces = reactions;
            state.iteration = it + 1;
            state.log.push(row.clone());

            let coarse = self.coarse_original(&state.phi);
            let fine_orig = self
                .fine_original(&state.phi)
                .map_err(|e| abort("output", it, e, Some(&state)))?;
            observe(&IterationView {
                row: &row,
                fine: &fine_orig,
                coarse: &coarse,
            })
            .map_err(|e| abort("output", it, e, Some(&state)))?;

            // (6) schedules and termination
            state.k *= cfg.k_growth;
            state.ratio = (state.ratio * cfg.ratio_decay).max(cfg.ratio_floor);
            if row.spring_residual < cfg.spring_tol {
                break Termination::Converged;
            }
            if stagnated(&state.log, cfg.stagnation_window, cfg.stagnation_tol) {
                break Termination::Stagnated;
            }
            if state.iteration >= cfg.max_iterations {
                break Termination::IterationCap;
            }
        };

        let forces_nd = if state.forces.is_empty() {
            self.boundary_forces(&state.phi)?
        } else {
            state.forces.clone()
        };
        // Nodal forces carry an area factor; stresses are unit-free here.
        let area = self.scale * self.scale;
        let forces: Vec<Vec3> = forces_nd.iter().map(|f| f * area).collect();
        let pulled_back = pullback_with(&self.space, &forces, &state.phi)?;
        Ok(MatchResult {
            fine_deformation: self.fine_original(&state.phi)?,
            coarse_deformation: self.coarse_original(&state.phi),
            forces,
            pulled_back,
            log: state.log.clone(),
            termination,
            state,
        })
    }
}

fn newton_recoverable(e: &Error) -> bool {
    matches!(
        e,
        Error::Flipped { .. }
            | Error::LineSearch { .. }
            | Error::NewtonNotConverged { .. }
            | Error::Domain { .. }
            | Error::Factorization { .. }
    )
}

/// Decodes the best iterate of a solve that hit its iteration cap.
fn decode_fallback(cs: &crate::condense::CondensedSystem, raw: crate::socp::ConicSolution) -> ConeSolution {
    let kb = cs.num_boundary();
    let phi_b: Vec<f64> = raw.x[..3 * kb].iter().zip(cs.base_boundary()).map(|(d, b)| b + d).collect();
    let forces = cs.boundary_force(&phi_b).unwrap_or_default();
    ConeSolution {
        phi_b,
        forces,
        bounds: raw.x[3 * kb..4 * kb].to_vec(),
        spring: raw.x[4 * kb],
        objective: raw.primal_objective,
        gap: raw.gap,
        relative_gap: raw.relative_gap,
        iterations: raw.iterations,
        raw,
    }
}

/// True when the last `window` relative force changes are all below `tol`.
fn stagnated(log: &[LogRow], window: usize, tol: f64) -> bool {
    if log.len() < window + 1 {
        return false;
    }
    log.windows(2).rev().take(window).all(|w| {
        let (a, b) = (w[0].force_l1, w[1].force_l1);
        (b - a).abs() <= tol * a.abs().max(f64::MIN_POSITIVE)
    })
}

/// Convenience wrapper: prepare and run once.
pub fn run(config: &MatchConfig, source: &SurfaceMesh, target: &SurfaceMesh, coarse: &TetMesh) -> Result<MatchResult> {
    Matcher::new(config, source, coarse)?.run(target)
}

/// `node,x,y,z,fx,fy,fz,px,py,pz` rows for the boundary nodes.
pub fn write_forces_csv(
    path: &Path,
    mesh: &TetMesh,
    coarse: &NodalField,
    forces: &[Vec3],
    pulled_back: &[Vec3],
) -> Result<()> {
    let mut s = String::from("node,x,y,z,fx,fy,fz,px,py,pz\n");
    for (k, &n) in mesh.boundary_nodes().iter().enumerate() {
        let p = coarse.node(n);
        let f = forces[k];
        let q = pulled_back[k];
        let _ = writeln!(
            s,
            "{n},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            p.x, p.y, p.z, f.x, f.y, f.z, q.x, q.y, q.z
        );
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}
