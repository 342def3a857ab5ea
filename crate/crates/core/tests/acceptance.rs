//! End-to-end acceptance checks. Each criterion prints one `PASS` or `FAIL`
//! line with the measured quantities; the test fails if any criterion does.
//!
//! Run with `cargo test --release -p forcematch --test acceptance -- --nocapture`.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use clap::Parser;
use forcematch::beam::{coarse_beam, fine_beam, twist_frames, twist_points, BeamSpec};
use forcematch::cli::{self, Cli};
use forcematch::condense::condense;
use forcematch::descriptors::{default_times, hks, spectral_basis, TargetIndex};
use forcematch::fem::{FemSpace, NodalField};
use forcematch::matcher::{write_forces_csv, MatchConfig, Matcher, Termination};
use forcematch::materials::MaterialModel;
use forcematch::mesh::io::{write_obj, write_tet_mesh};
use forcematch::mesh::{SurfaceMesh, TetMesh, Vec3};
use forcematch::socp::{kkt_residuals, solve, SolverOptions};
use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, Unit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn frob_rel(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let n: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    d / n.max(f64::MIN_POSITIVE)
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation3<f64> {
    let axis = loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if v.norm() > 0.1 && v.norm() < 1.0 {
            break Unit::new_normalize(v);
        }
    };
    Rotation3::from_axis_angle(&axis, rng.random_range(0.1..std::f64::consts::PI))
}

/// Random deformation gradient with determinant in `[0.5, 2]`.
fn random_f(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    loop {
        let mut f = Matrix3::identity();
        for v in f.iter_mut() {
            *v += rng.random_range(-0.4..0.4);
        }
        let f = random_rotation(rng).matrix() * f;
        let d = f.determinant();
        if (0.5..=2.0).contains(&d) {
            return f;
        }
    }
}

fn models() -> Vec<MaterialModel> {
    vec![
        MaterialModel::linear(1.3, 0.8).unwrap(),
        MaterialModel::svk(1.3, 0.8).unwrap(),
        MaterialModel::neo_hookean(0.7, 1.9).unwrap(),
    ]
}

// ---------------------------------------------------------------- 1

fn material_consistency() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_p, mut worst_t) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let f = random_f(&mut rng);
        for m in models() {
            let p = m.first_pk(&f).unwrap();
            let a = m.tangent(&f).unwrap();
            let h = 1e-5;
            let mut fd_p = Matrix3::zeros();
            let mut fd_a = DMatrix::zeros(9, 9);
            // The tangent is flattened row-major: entry (i, j) of F is index 3i + j.
            for k in 0..9 {
                let (r, c) = (k / 3, k % 3);
                let (mut fp, mut fm) = (f, f);
                fp[(r, c)] += h;
                fm[(r, c)] -= h;
                fd_p[(r, c)] = (m.energy(&fp).unwrap() - m.energy(&fm).unwrap()) / (2.0 * h);
                let dp = (m.first_pk(&fp).unwrap() - m.first_pk(&fm).unwrap()) / (2.0 * h);
                for l in 0..9 {
                    fd_a[(l, k)] = dp[(l / 3, l % 3)];
                }
            }
            worst_p = worst_p.max(frob_rel(fd_p.as_slice(), p.as_slice()));
            worst_t = worst_t.max(frob_rel(fd_a.as_slice(), a.as_slice()));
        }
    }
    let el = t0.elapsed();
    outcome(
        worst_p < 1e-6 && worst_t < 1e-5 && el < Duration::from_secs(5),
        format!("stress rel err {worst_p:.2e} (< 1e-6), tangent rel err {worst_t:.2e} (< 1e-5), {el:.2?} (< 5 s)"),
    )
}

// ---------------------------------------------------------------- 2

fn rotation_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let [linear, svk, neo] = <[MaterialModel; 3]>::try_from(models()).ok().unwrap();
    let (mut worst, mut linear_gap) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let f = random_f(&mut rng);
        let r = random_rotation(&mut rng);
        let rf = r.matrix() * f;
        for m in [&svk, &neo] {
            worst = worst.max(rel(m.energy(&rf).unwrap(), m.energy(&f).unwrap()));
            worst = worst.max(frob_rel(m.second_pk(&rf).unwrap().as_slice(), m.second_pk(&f).unwrap().as_slice()));
        }
        linear_gap = linear_gap.max(rel(linear.energy(&rf).unwrap(), linear.energy(&f).unwrap()));
    }
    outcome(
        worst < 1e-10 && linear_gap > 1e-3,
        format!("SVK/NEO worst rel change {worst:.2e} (< 1e-10), linear model largest rel change {linear_gap:.2e} (> 1e-3)"),
    )
}

// ---------------------------------------------------------------- 3

/// Structured beam with jittered nodes, at most 150 nodes.
fn random_tet_mesh(rng: &mut ChaCha8Rng) -> TetMesh {
    let spec = BeamSpec {
        width: rng.random_range(0.5..2.0),
        height: rng.random_range(0.5..3.0),
        coarse_xy: rng.random_range(2..=4),
        coarse_z: rng.random_range(2..=5),
        fine_xy: 1,
        fine_z: 1,
    };
    let mesh = coarse_beam(&spec).unwrap();
    let hx = spec.width / spec.coarse_xy as f64;
    let hz = spec.height / spec.coarse_z as f64;
    let nodes = mesh
        .nodes()
        .iter()
        .map(|p| p + Vec3::new(hx * rng.random_range(-0.15..0.15), hx * rng.random_range(-0.15..0.15), hz * rng.random_range(-0.15..0.15)))
        .collect();
    TetMesh::new(nodes, mesh.tets().to_vec()).unwrap()
}

/// Boundary forces of the linearized full system with the boundary held at
/// `phi_b`, from one dense solve over all degrees of freedom.
fn dense_boundary_force(k: &DMatrix<f64>, r: &[f64], phi0: &[f64], mesh: &TetMesh, phi_b: &[f64]) -> Vec<f64> {
    let n = r.len();
    let mut bdof = vec![None; n];
    for (j, &node) in mesh.boundary_nodes().iter().enumerate() {
        for c in 0..3 {
            bdof[3 * node + c] = Some(3 * j + c);
        }
    }
    // Interior rows: r + K (φ − φ₀) = 0. Boundary rows: φ = φ_B.
    let mut a = DMatrix::zeros(n, n);
    let mut rhs = DVector::zeros(n);
    let k_phi0 = k * DVector::from_column_slice(phi0);
    for i in 0..n {
        match bdof[i] {
            Some(j) => {
                a[(i, i)] = 1.0;
                rhs[i] = phi_b[j];
            }
            None => {
                a.row_mut(i).copy_from(&k.row(i));
                rhs[i] = k_phi0[i] - r[i];
            }
        }
    }
    let phi = a.lu().solve(&rhs).unwrap();
    let g = k * (&phi - DVector::from_column_slice(phi0));
    let mut out = vec![0.0; phi_b.len()];
    for i in 0..n {
        if let Some(j) = bdof[i] {
            out[j] = r[i] + g[i];
        }
    }
    out
}

fn condensation_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut max_nodes = 0;
    for trial in 0..10 {
        let mesh = random_tet_mesh(&mut rng);
        max_nodes = max_nodes.max(mesh.num_nodes());
        let model = if trial % 2 == 0 { MaterialModel::neo_hookean(1.0, 10.0) } else { MaterialModel::svk(1.0, 1.0) }.unwrap();
        let space = FemSpace::new(&mesh);
        let phi0: Vec<Vec3> = mesh.nodes().iter().map(|p| p * 1.05 + Vec3::new(rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02))).collect();
        let phi0 = NodalField::from_positions(&phi0);
        let sys = space.assemble(&model, &phi0).unwrap();
        let cs = condense(&space, &sys, &phi0).unwrap();
        let k = sys.tangent.to_dense();
        for _ in 0..3 {
            let phi_b: Vec<f64> = phi0.boundary_values(&mesh).iter().map(|v| v + rng.random_range(-0.05..0.05)).collect();
            let got = cs.boundary_force_flat(&phi_b).unwrap();
            let want = dense_boundary_force(&k, &sys.residual, phi0.as_slice(), &mesh, &phi_b);
            worst = worst.max(frob_rel(&got, &want));
        }
    }
    let el = t0.elapsed();
    outcome(
        worst < 1e-10 && max_nodes <= 200 && el < Duration::from_secs(10),
        format!("worst rel err {worst:.2e} (< 1e-10), largest mesh {max_nodes} nodes, {el:.2?} (< 10 s)"),
    )
}

// ---------------------------------------------------------------- 4

fn socp_correctness() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let opts = SolverOptions { tol: 1e-9, abs_tol: 1e-10, max_iter: 200 };
    let (mut worst_obj, mut worst_kkt) = (0.0f64, 0.0f64);
    let mut failures = 0;
    for _ in 0..50 {
        let rp = common::random_program(&mut rng, 8);
        let reference = common::barrier_reference(&rp);
        match solve(&rp.problem, &opts) {
            Ok(sol) => {
                worst_obj = worst_obj.max((sol.primal_objective - reference).abs() / reference.abs().max(1.0));
                let k = kkt_residuals(&rp.problem, &sol);
                worst_kkt = worst_kkt.max(k.primal).max(k.dual).max(k.complementarity).max(k.cone_violation);
            }
            Err(_) => failures += 1,
        }
    }
    let el = t0.elapsed();
    outcome(
        failures == 0 && worst_obj < 1e-4 && worst_kkt < 1e-6 && el < Duration::from_secs(30),
        format!("solver errors {failures}, worst objective rel err {worst_obj:.2e} (< 1e-4), worst KKT residual {worst_kkt:.2e} (< 1e-6), {el:.2?} (< 30 s)"),
    )
}

// ---------------------------------------------------------------- 5, 8, 10

fn rigid_spec() -> BeamSpec {
    BeamSpec { width: 1.0, height: 2.5, coarse_xy: 4, coarse_z: 10, fine_xy: 14, fine_z: 35 }
}

fn rigid_inputs(dir: &Path) {
    let spec = rigid_spec();
    let coarse = coarse_beam(&spec).unwrap();
    let fine = fine_beam(&spec).unwrap();
    let r = Rotation3::from_axis_angle(&Vec3::x_axis(), 40f64.to_radians());
    let target = fine.with_vertices(fine.vertices().iter().map(|p| r * p).collect()).unwrap();
    write_obj(&dir.join("source.obj"), &fine).unwrap();
    write_obj(&dir.join("target.obj"), &target).unwrap();
    write_tet_mesh(&dir.join("coarse.node"), &dir.join("coarse.ele"), &coarse).unwrap();
}

fn rigid_run(inputs: &Path, out: &Path) -> (Termination, Duration) {
    let s = |p: &str| inputs.join(p).display().to_string();
    let cli = Cli::parse_from([
        "forcematch".to_string(),
        "match".into(),
        "--source".into(),
        s("source.obj"),
        "--target".into(),
        s("target.obj"),
        "--coarse".into(),
        s("coarse"),
        "--out".into(),
        out.display().to_string(),
        "--max-iterations".into(),
        "30".into(),
        "--set".into(),
        "descriptor_iterations=0".into(),
    ]);
    let cli::Command::Match(args) = cli.command else { unreachable!() };
    let t0 = Instant::now();
    let term = cli::cmd_match(&args).unwrap();
    (term, t0.elapsed())
}

fn rigid_recovery(run: &Path, elapsed: Duration) -> Outcome {
    let log = forcematch::matcher::read_log_csv(&run.join(cli::LOG)).unwrap();
    let first = log.first().unwrap().force_l1;
    let last = log.last().unwrap().force_l1;
    let ratio = last / first;
    outcome(
        ratio < 0.01 && log.len() <= 30 && elapsed < Duration::from_secs(300),
        format!(
            "{} tets, {} triangles; force L1 {first:.3e} -> {last:.3e}, ratio {ratio:.2e} (< 1e-2) after {} iterations (<= 30), {elapsed:.1?} (< 5 min)",
            rigid_spec().num_tets(),
            rigid_spec().num_triangles(),
            log.len()
        ),
    )
}

fn determinism(a: &Path, b: &Path) -> Outcome {
    let la = std::fs::read(a.join(cli::LOG)).unwrap();
    let lb = std::fs::read(b.join(cli::LOG)).unwrap();
    outcome(la == lb && !la.is_empty(), format!("log.csv {} bytes vs {} bytes, identical: {}", la.len(), lb.len(), la == lb))
}

fn max_dist(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max)
}

/// Emitted fine meshes against `T` applied to the emitted coarse boundary,
/// and translation equivariance of `T` with and without smoothing.
fn two_scale(run: &Path, inputs: &Path, twist: (f64, usize)) -> Outcome {
    let source = forcematch::mesh::load_surface_mesh(&inputs.join("source.obj")).unwrap();
    let coarse = forcematch::mesh::load_tet_mesh(&inputs.join("coarse.node"), &inputs.join("coarse.ele")).unwrap();
    let mut cfg = MatchConfig::default();
    cfg.descriptor_iterations = 0;
    let m = Matcher::new(&cfg, &source, &coarse).unwrap();
    let rest_b = NodalField::identity(&coarse).boundary_values(&coarse);

    // The last emitted iteration mesh against T applied to the saved coarse state.
    let final_nodes = forcematch::mesh::load_tet_mesh(&run.join(cli::COARSE_FINAL), &inputs.join("coarse.ele")).unwrap();
    let final_phi = NodalField::from_positions(final_nodes.nodes());
    let fine_t = m.prolongation().deform(source.vertices(), &final_phi.boundary_values(&coarse), &rest_b).unwrap();
    let mut emitted = Vec::new();
    for e in std::fs::read_dir(run).unwrap() {
        let p = e.unwrap().path();
        if p.file_name().unwrap().to_string_lossy().starts_with("iter_") {
            emitted.push(p);
        }
    }
    emitted.sort();
    let last = forcematch::mesh::load_surface_mesh(emitted.last().unwrap()).unwrap();
    let exact_gap = max_dist(last.vertices(), &fine_t);

    let mut worst_shift = 0.0f64;
    let d = Vec3::new(0.37, -1.25, 2.5);
    for steps in [0usize, 3] {
        let mut c = cfg.clone();
        c.smoothing_steps = steps;
        let mm = Matcher::new(&c, &source, &coarse).unwrap();
        let phi_b = final_phi.boundary_values(&coarse);
        let moved: Vec<f64> = phi_b.chunks_exact(3).flat_map(|p| [p[0] + d.x, p[1] + d.y, p[2] + d.z]).collect();
        let base = mm.prolongation().deform(source.vertices(), &phi_b, &rest_b).unwrap();
        let shifted = mm.prolongation().deform(source.vertices(), &moved, &rest_b).unwrap();
        for (a, b) in base.iter().zip(&shifted) {
            worst_shift = worst_shift.max((b - a - d).abs().max());
        }
    }
    outcome(
        exact_gap == 0.0 && twist.0 == 0.0 && worst_shift < 1e-12,
        format!(
            "fine mesh vs T(coarse boundary) max gap {exact_gap:.1e} on the rigid run's files, {:.1e} over {} twist iterations (both exact); translation error {worst_shift:.2e} (< 1e-12)",
            twist.0, twist.1
        ),
    )
}

// ---------------------------------------------------------------- 6, 7

fn twist_spec() -> BeamSpec {
    BeamSpec { width: 1.0, height: 4.0, coarse_xy: 3, coarse_z: 12, fine_xy: 9, fine_z: 36 }
}

/// Area-weighted RMS distance to the twisted target when every coarse node
/// sits exactly on the twisted beam: the best a piecewise-flat cage can do.
fn discretization_floor(m: &Matcher, spec: &BeamSpec, coarse: &TetMesh, fine: &SurfaceMesh, target: &SurfaceMesh, angle: f64) -> f64 {
    let scale = m.length_scale();
    let twisted: Vec<Vec3> = twist_points(spec, coarse.nodes(), angle).iter().map(|p| p / scale).collect();
    let fo = m.fine_original(&NodalField::from_positions(&twisted)).unwrap();
    let cp = TargetIndex::new(target).unwrap().closest_points(&fo);
    let areas = fine.vertex_areas();
    let (mut num, mut den) = (0.0, 0.0);
    for ((p, c), w) in fo.iter().zip(cp.entries()).zip(&areas) {
        num += w * (p - c.target).norm_squared();
        den += w;
    }
    (num / den).sqrt() / scale
}

struct TwistRun {
    terminations: Vec<Termination>,
    newton: Vec<usize>,
    top_share: f64,
    /// Largest distance between an emitted fine mesh and `T` applied to the
    /// emitted coarse boundary, over every iteration of every frame.
    t_gap: f64,
    meshes: usize,
}

fn twist_run(material: &str, tol: f64, dir: &Path) -> TwistRun {
    let spec = twist_spec();
    let coarse = coarse_beam(&spec).unwrap();
    let fine = fine_beam(&spec).unwrap();
    let frames = twist_frames(&spec, &fine, 90.0, 15).unwrap();
    let mut cfg = MatchConfig::default();
    cfg.material = material.into();
    cfg.descriptor_iterations = 0;
    cfg.spring_tol = tol;
    let m = Matcher::new(&cfg, &fine, &coarse).unwrap();
    let mut state = m.initial_state();
    let mut out = TwistRun { terminations: Vec::new(), newton: Vec::new(), top_share: 0.0, t_gap: 0.0, meshes: 0 };
    let rest_b = NodalField::identity(&coarse).boundary_values(&coarse);
    let mut last = None;
    for target in &frames {
        let (mut gap, mut meshes) = (0.0f64, 0usize);
        let observe = |v: &forcematch::matcher::IterationView| {
            let t = m.prolongation().deform(fine.vertices(), &v.coarse.boundary_values(&coarse), &rest_b)?;
            gap = gap.max(max_dist(v.fine, &t));
            meshes += 1;
            Ok(())
        };
        let res = m.run_from(target, state.clone(), observe);
        out.t_gap = out.t_gap.max(gap);
        out.meshes += meshes;
        match res {
            Ok(res) => {
                out.terminations.push(res.termination);
                out.newton.push(res.log.iter().map(|r| r.newton_iters).sum());
                state = m.state_from(&res.state.phi).unwrap();
                last = Some(res);
            }
            Err(e) => {
                println!("  {material}: frame {} failed: {e}", out.terminations.len() + 1);
                return out;
            }
        }
    }
    let res = last.unwrap();
    let path = dir.join(cli::FORCES);
    write_forces_csv(&path, &coarse, &res.coarse_deformation, &res.forces, &res.pulled_back).unwrap();
    out.top_share = top_quartile_share(&path, &coarse);
    out
}

/// Share of `Σ‖f‖` carried by the quarter of boundary nodes farthest from
/// the beam's mid-height, ranked by rest |z|, read back from the CSV.
fn top_quartile_share(path: &Path, coarse: &TetMesh) -> f64 {
    let text = std::fs::read_to_string(path).unwrap();
    let mut rows: Vec<(f64, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            let node = v[0] as usize;
            (coarse.nodes()[node].z.abs(), Vec3::new(v[4], v[5], v[6]).norm())
        })
        .collect();
    rows.sort_by(|a, b| b.0.total_cmp(&a.0));
    let total: f64 = rows.iter().map(|r| r.1).sum();
    let top: f64 = rows[..rows.len() / 4].iter().map(|r| r.1).sum();
    top / total
}

fn twist_tracking(dir: &Path) -> (Outcome, Outcome, (f64, usize)) {
    let t0 = Instant::now();
    let spec = twist_spec();
    let coarse = coarse_beam(&spec).unwrap();
    let fine = fine_beam(&spec).unwrap();
    let frames = twist_frames(&spec, &fine, 90.0, 15).unwrap();
    let mut cfg = MatchConfig::default();
    cfg.descriptor_iterations = 0;
    let m = Matcher::new(&cfg, &fine, &coarse).unwrap();
    let floor = discretization_floor(&m, &spec, &coarse, &fine, frames.last().unwrap(), 90f64.to_radians());
    let tol = 2.0 * floor;
    println!("  twist: {} tets, {} triangles, final-frame floor {floor:.3e}, spring tolerance {tol:.3e}", coarse.num_tets(), fine.num_triangles());

    let neo_dir = dir.join("neo");
    let svk_dir = dir.join("svk");
    std::fs::create_dir_all(&neo_dir).unwrap();
    std::fs::create_dir_all(&svk_dir).unwrap();
    let neo = twist_run("neo", tol, &neo_dir);
    println!("  neo: newton per frame {:?}", neo.newton);
    let svk = twist_run("svk", tol, &svk_dir);
    println!("  svk: newton per frame {:?}", svk.newton);
    let el = t0.elapsed();
    let neo_ok = neo.terminations.len() == 15 && neo.terminations.iter().all(|t| *t == Termination::Converged);
    let tail = |r: &TwistRun| -> usize { r.newton.iter().rev().take(3).sum() };
    let svk_complete = svk.newton.len() == 15;
    let c6 = outcome(
        neo_ok && svk_complete && tail(&svk) >= tail(&neo) && el < Duration::from_secs(1200),
        format!(
            "NEO converged on {}/15 frames; Newton iterations on final 3 frames SVK {} vs NEO {} (SVK >= NEO, SVK frames run {}/15); {el:.1?} (< 20 min)",
            neo.terminations.iter().filter(|t| **t == Termination::Converged).count(),
            tail(&svk),
            tail(&neo),
            svk.newton.len()
        ),
    );
    let c7 = outcome(
        neo_ok && neo.top_share > 0.6,
        format!("outer-quartile nodes by |z| carry {:.1}% of the final-frame force L1 norm (> 60%)", 100.0 * neo.top_share),
    );
    let gaps = (neo.t_gap.max(svk.t_gap), neo.meshes + svk.meshes);
    (c6, c7, gaps)
}

// ---------------------------------------------------------------- 9

fn hks_sanity() -> Outcome {
    let sphere = common::icosphere(4);
    let basis = spectral_basis(&sphere, 100).unwrap();
    let ev = basis.eigenvalues();
    let times = default_times(&basis, 10).unwrap();
    let field = hks(&basis, &times).unwrap();
    let mut worst_cv = 0.0f64;
    for c in 0..times.len() {
        let col = field.values().column(c);
        let mean = col.mean();
        let sd = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
        worst_cv = worst_cv.max(sd / mean);
    }
    let l2_err = (ev[1] - 2.0).abs() / 2.0;
    outcome(
        sphere.num_vertices() == 2562 && worst_cv < 0.05 && ev[0].abs() < 1e-8 && l2_err < 0.1,
        format!(
            "{} vertices; worst HKS coefficient of variation {:.2}% (< 5%), lambda_1 {:.1e} (< 1e-8), lambda_2 {:.4} (2 within 10%)",
            sphere.num_vertices(),
            100.0 * worst_cv,
            ev[0],
            ev[1]
        ),
    )
}

// ----------------------------------------------------------------

#[test]
fn acceptance() {
    let tmp = tempfile::tempdir().unwrap();
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut report = |n: usize, name: &'static str, o: Outcome| {
        println!("{} criterion {n} ({name}): {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, o));
    };

    report(1, "material consistency", material_consistency());
    report(2, "rotation invariance", rotation_invariance());
    report(3, "condensation oracle", condensation_oracle());
    report(4, "SOCP correctness", socp_correctness());

    let inputs = tmp.path().join("rigid");
    let (run_a, run_b) = (tmp.path().join("rigid_a"), tmp.path().join("rigid_b"));
    std::fs::create_dir_all(&inputs).unwrap();
    rigid_inputs(&inputs);
    let (_, el_a) = rigid_run(&inputs, &run_a);
    report(5, "rigid-motion recovery", rigid_recovery(&run_a, el_a));

    let (c6, c7, twist_gaps) = twist_tracking(tmp.path());
    report(6, "twist tracking", c6);
    report(7, "sparsity of explanation", c7);

    report(8, "two-scale consistency", two_scale(&run_a, &inputs, twist_gaps));
    report(9, "HKS sanity", hks_sanity());

    rigid_run(&inputs, &run_b);
    report(10, "determinism", determinism(&run_a, &run_b));

    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!("{} of {} criteria passed", results.len() - failed.len(), results.len());
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
