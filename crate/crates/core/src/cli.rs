//! Command-line front end.
//!
//! Every `match` run writes one directory with a fixed layout:
//!
//! ```text
//! manifest.txt       resolved configuration, input hashes, timings, summary
//! log.csv            one row per outer iteration
//! iter_0001.obj ...  deformed fine surface after each iteration
//! forces_final.csv   boundary forces at the final state
//! coarse_final.node  final coarse deformation, usable with --warm-start
//! ```
//!
//! The manifest is itself a valid configuration file: its `config.` keys
//! reproduce the run.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::beam::{coarse_beam, fine_beam, twist_frames, BeamSpec};
use crate::config::{parse_kv, KEYS};
use crate::descriptors::{default_times, hks, spectral_basis};
use crate::error::{Error, Result};
use crate::fem::NodalField;
use crate::matcher::{read_log_csv, write_forces_csv, write_log_csv, LogRow, MatchConfig, Matcher, Termination};
use crate::mesh::io::{write_node_file, write_obj, write_obj_points, write_tet_mesh};
use crate::mesh::{embed_surface, load_surface_mesh, load_tet_mesh, SurfaceMesh, TetMesh};

pub const MANIFEST: &str = "manifest.txt";
pub const LOG: &str = "log.csv";
pub const FORCES: &str = "forces_final.csv";
pub const COARSE_FINAL: &str = "coarse_final.node";

#[derive(Debug, Parser)]
#[command(name = "forcematch", version, about = "Surface matching by sparse hyperelastic boundary forces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Match a source surface to a target and write a run directory.
    Match(MatchArgs),
    /// Generate the synthetic beam and a twisted frame sequence.
    GenBeam(GenBeamArgs),
    /// Summarize one or more run directories.
    Diagnose(DiagnoseArgs),
    /// Write heat kernel signatures of a surface as CSV.
    Hks(HksArgs),
    /// Embed a surface into a tet mesh and report the residuals.
    Embed(EmbedArgs),
}

#[derive(Debug, Args)]
pub struct CoarseArgs {
    /// Coarse tet mesh: a `.node` or `.ele` path, or their common stem.
    #[arg(long)]
    pub coarse: PathBuf,
}

impl CoarseArgs {
    pub fn paths(&self) -> (PathBuf, PathBuf) {
        let p = &self.coarse;
        let stem = match p.extension().and_then(|e| e.to_str()) {
            Some("node" | "ele") => p.with_extension(""),
            _ => p.clone(),
        };
        (stem.with_extension("node"), stem.with_extension("ele"))
    }

    pub fn load(&self) -> Result<TetMesh> {
        let (n, e) = self.paths();
        load_tet_mesh(&n, &e)
    }
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    /// Source surface (OFF, OBJ or PLY).
    #[arg(long)]
    pub source: PathBuf,
    /// Target surface.
    #[arg(long)]
    pub target: PathBuf,
    #[command(flatten)]
    pub coarse: CoarseArgs,
    /// Configuration file, or the manifest of an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output run directory, created if needed.
    #[arg(long)]
    pub out: PathBuf,
    /// Start from the final coarse deformation of an earlier run.
    #[arg(long)]
    pub warm_start: Option<PathBuf>,
    /// Material model; overrides the configuration file.
    #[arg(long)]
    pub material: Option<String>,
    /// Outer iteration cap; overrides the configuration file.
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Worker threads; overrides the configuration file.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Any configuration key as `key=value`; repeatable, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Skip the per-iteration surface meshes.
    #[arg(long)]
    pub no_iteration_meshes: bool,
}

#[derive(Debug, Args)]
pub struct GenBeamArgs {
    /// Coarse cells across the beam; the beam is `r × r × 4r` cells.
    #[arg(long, default_value_t = 4)]
    pub resolution: usize,
    /// Fine surface cells per coarse cell along each axis.
    #[arg(long, default_value_t = 5)]
    pub fine_factor: usize,
    /// Total twist of the top face at the last frame, in degrees.
    #[arg(long, default_value_t = 90.0)]
    pub twist: f64,
    #[arg(long, default_value_t = 15)]
    pub frames: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// Run directories to summarize side by side.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HksArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub eigenpairs: usize,
    #[arg(long, default_value_t = 10)]
    pub samples: usize,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[command(flatten)]
    pub coarse: CoarseArgs,
}

/// Parses the process arguments, runs the command and returns the exit
/// status: 0 on success or convergence, 2 when a match stopped without
/// converging, 1 on any error.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Match(a) => cmd_match(&a).map(|t| t.exit_code()),
        Command::GenBeam(a) => cmd_gen_beam(&a).map(|_| 0),
        Command::Diagnose(a) => {
            print!("{}", cmd_diagnose(&a.runs)?);
            Ok(0)
        }
        Command::Hks(a) => cmd_hks(&a).map(|_| 0),
        Command::Embed(a) => {
            print!("{}", cmd_embed(&a)?);
            Ok(0)
        }
    }
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Resolves the configuration: defaults, then the file, then flags.
pub fn resolve_config(a: &MatchArgs) -> Result<MatchConfig> {
    let mut cfg = MatchConfig::default();
    if let Some(path) = &a.config {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        cfg.apply_text(&text, path)?;
    }
    if let Some(m) = &a.material {
        cfg.set("material", m)?;
    }
    if let Some(n) = a.max_iterations {
        cfg.max_iterations = n;
    }
    if let Some(n) = a.threads {
        cfg.threads = n;
    }
    for kv in &a.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config {
            key: kv.clone(),
            msg: "expected key=value".into(),
        })?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Text of a run manifest. `summary` rows come last.
fn manifest_text(cfg: &MatchConfig, run: &[(String, String)], summary: &[(String, String)]) -> String {
    let mut s = String::from("# forcematch run manifest\n\n");
    for ((key, value), (_, doc)) in cfg.snapshot().iter().zip(KEYS) {
        let _ = writeln!(s, "# {doc}\nconfig.{key} = {value}");
    }
    s.push('\n');
    for (k, v) in run.iter().chain(summary) {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}

fn summary_rows(log: &[LogRow]) -> Vec<(String, String)> {
    let mut out = vec![("summary.iterations".to_string(), log.len().to_string())];
    if let (Some(first), Some(last)) = (log.first(), log.last()) {
        let ratio = if first.force_l1 > 0.0 { last.force_l1 / first.force_l1 } else { 0.0 };
        out.extend([
            ("summary.force_l1_initial".into(), format!("{:e}", first.force_l1)),
            ("summary.force_l1_final".into(), format!("{:e}", last.force_l1)),
            ("summary.force_ratio".into(), format!("{ratio:e}")),
            ("summary.spring_residual_final".into(), format!("{:e}", last.spring_residual)),
            (
                "summary.newton_iters_total".into(),
                log.iter().map(|r| r.newton_iters).sum::<usize>().to_string(),
            ),
            (
                "summary.socp_iters_total".into(),
                log.iter().map(|r| r.socp_iters).sum::<usize>().to_string(),
            ),
        ]);
    }
    out
}

/// Runs `match`; returns how the loop terminated.
pub fn cmd_match(a: &MatchArgs) -> Result<Termination> {
    let started = unix_now();
    let clock = Instant::now();
    let cfg = resolve_config(a)?;
    let (node_path, ele_path) = a.coarse.paths();
    let source = load_surface_mesh(&a.source)?;
    let target = load_surface_mesh(&a.target)?;
    let coarse = load_tet_mesh(&node_path, &ele_path)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;

    let mut run: Vec<(String, String)> = vec![
        ("run.version".into(), env!("CARGO_PKG_VERSION").into()),
        ("run.started_unix".into(), format!("{started:.3}")),
    ];
    let mut inputs = vec![
        ("source", a.source.clone()),
        ("target", a.target.clone()),
        ("coarse_node", node_path.clone()),
        ("coarse_ele", ele_path.clone()),
    ];
    if let Some(c) = &a.config {
        inputs.push(("config", c.clone()));
    }
    let warm_path = a.warm_start.as_ref().map(|d| d.join(COARSE_FINAL));
    if let Some(w) = &warm_path {
        inputs.push(("warm_start", w.clone()));
    }
    for (name, path) in &inputs {
        run.push((format!("input.{name}.path"), path.display().to_string()));
        run.push((format!("input.{name}.sha256"), sha256_file(path)?));
    }

    let matcher = Matcher::new(&cfg, &source, &coarse)?;
    let (emb_max, emb_mean) = matcher.embedding().residual_stats();
    run.push(("run.length_scale".into(), format!("{:e}", matcher.length_scale())));
    run.push(("run.embedding_max_residual".into(), format!("{emb_max:e}")));
    run.push(("run.embedding_mean_residual".into(), format!("{emb_mean:e}")));
    run.push(("run.source_vertices".into(), source.num_vertices().to_string()));
    run.push(("run.coarse_tets".into(), coarse.num_tets().to_string()));
    run.push(("run.boundary_nodes".into(), coarse.boundary_nodes().len().to_string()));

    let state = match &warm_path {
        Some(w) => {
            let warm = load_tet_mesh(w, &ele_path)?;
            let inv = 1.0 / matcher.length_scale();
            let phi = NodalField::from_positions(&warm.nodes().iter().map(|p| p * inv).collect::<Vec<_>>());
            matcher.state_from(&phi)?
        }
        None => matcher.initial_state(),
    };

    let out = a.out.clone();
    let tris = source.triangles().to_vec();
    let write_meshes = !a.no_iteration_meshes;
    let mut rows: Vec<LogRow> = Vec::new();
    let result = matcher.run_from(&target, state, |view| {
        rows.push(view.row.clone());
        if write_meshes {
            write_obj_points(&out.join(format!("iter_{:04}.obj", view.row.iteration)), view.fine, &tris)?;
        }
        write_log_csv(&out.join(LOG), &rows)
    });

    let finish = |run: &mut Vec<(String, String)>, termination: &str, code: i32, log: &[LogRow]| -> Result<()> {
        run.push(("run.finished_unix".into(), format!("{:.3}", unix_now())));
        run.push(("run.elapsed_seconds".into(), format!("{:.3}", clock.elapsed().as_secs_f64())));
        run.push(("run.termination".into(), termination.into()));
        run.push(("run.exit_code".into(), code.to_string()));
        write_log_csv(&a.out.join(LOG), log)?;
        let text = manifest_text(&cfg, run, &summary_rows(log));
        std::fs::write(a.out.join(MANIFEST), text).map_err(|e| Error::io(a.out.join(MANIFEST), e))
    };

    match result {
        Ok(res) => {
            write_forces_csv(&a.out.join(FORCES), &coarse, &res.coarse_deformation, &res.forces, &res.pulled_back)?;
            write_node_file(&a.out.join(COARSE_FINAL), &res.coarse_deformation.to_positions())?;
            finish(&mut run, res.termination.as_str(), res.termination.exit_code(), &res.log)?;
            Ok(res.termination)
        }
        Err(e) => {
            if let Error::MatchAborted(ab) = &e {
                run.push(("run.failed_stage".into(), ab.stage.clone()));
                run.push(("run.failed_iteration".into(), ab.iteration.to_string()));
            }
            run.push(("run.error".into(), e.to_string().replace('\n', " ")));
            finish(&mut run, "error", 1, &rows)?;
            Err(e)
        }
    }
}

/// Writes `source.obj`, `coarse.node`/`coarse.ele` and `frame_NNN.obj`.
pub fn cmd_gen_beam(a: &GenBeamArgs) -> Result<()> {
    if a.resolution < 2 {
        return Err(Error::InvalidParameter("resolution must be at least 2".into()));
    }
    if a.frames < 1 {
        return Err(Error::InvalidParameter("frames must be at least 1".into()));
    }
    if a.fine_factor < 1 || !a.twist.is_finite() {
        return Err(Error::InvalidParameter("fine factor must be at least 1 and twist finite".into()));
    }
    let mut spec = BeamSpec::with_resolution(a.resolution);
    spec.fine_xy = a.fine_factor * spec.coarse_xy;
    spec.fine_z = a.fine_factor * spec.coarse_z;
    let coarse = coarse_beam(&spec)?;
    let fine = fine_beam(&spec)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    write_obj(&a.out.join("source.obj"), &fine)?;
    write_tet_mesh(&a.out.join("coarse.node"), &a.out.join("coarse.ele"), &coarse)?;
    for (j, frame) in twist_frames(&spec, &fine, a.twist, a.frames)?.iter().enumerate() {
        write_obj(&a.out.join(format!("frame_{:03}.obj", j + 1)), frame)?;
    }
    Ok(())
}

struct RunSummary {
    dir: PathBuf,
    manifest: Vec<(String, String)>,
    log: Vec<LogRow>,
}

impl RunSummary {
    fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Vec<(String, String)> = parse_kv(&text, &path)?.into_iter().map(|(k, v, _)| (k, v)).collect();
        if !manifest.iter().any(|(k, _)| k == "config.material") {
            return Err(Error::parse(&path, 1, "manifest has no config.material entry"));
        }
        let log = read_log_csv(&dir.join(LOG))?;
        Ok(RunSummary {
            dir: dir.to_path_buf(),
            manifest,
            log,
        })
    }

    fn get(&self, key: &str) -> &str {
        self.manifest
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .unwrap_or("-")
    }
}

/// Force trajectories, a per-run comparison table and embedding statistics.
pub fn cmd_diagnose(runs: &[PathBuf]) -> Result<String> {
    let runs: Vec<RunSummary> = runs.iter().map(|d| RunSummary::load(d)).collect::<Result<_>>()?;
    let mut s = String::new();
    for r in &runs {
        let _ = writeln!(s, "run {}  (material {})", r.dir.display(), r.get("config.material"));
        let _ = writeln!(s, "{:>5} {:>14} {:>14} {:>8} {:>7}", "iter", "force_l1", "spring", "newton", "socp");
        for row in &r.log {
            let _ = writeln!(
                s,
                "{:>5} {:>14.6e} {:>14.6e} {:>8} {:>7}",
                row.iteration, row.force_l1, row.spring_residual, row.newton_iters, row.socp_iters
            );
        }
        if let (Some(f), Some(l)) = (r.log.first(), r.log.last()) {
            let ratio = if f.force_l1 > 0.0 { l.force_l1 / f.force_l1 } else { 0.0 };
            let _ = writeln!(s, "final/initial force ratio {ratio:.6e}");
        }
        s.push('\n');
    }
    let _ = writeln!(
        s,
        "{:<28} {:<8} {:>14} {:>6} {:>8} {:<14}",
        "run", "material", "force_l1", "iters", "newton", "termination"
    );
    for r in &runs {
        let name = r.dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let force = r.log.last().map_or(f64::NAN, |l| l.force_l1);
        let newton: usize = r.log.iter().map(|l| l.newton_iters).sum();
        let _ = writeln!(
            s,
            "{:<28} {:<8} {:>14.6e} {:>6} {:>8} {:<14}",
            name,
            r.get("config.material"),
            force,
            r.log.len(),
            newton,
            r.get("run.termination")
        );
    }
    s.push('\n');
    for r in &runs {
        let _ = writeln!(
            s,
            "embedding {}: max residual {}, mean residual {}",
            r.dir.display(),
            r.get("run.embedding_max_residual"),
            r.get("run.embedding_mean_residual")
        );
    }
    Ok(s)
}

pub fn cmd_hks(a: &HksArgs) -> Result<()> {
    let mesh = load_surface_mesh(&a.mesh)?;
    let m = a.eigenpairs.min(mesh.num_vertices());
    let basis = spectral_basis(&mesh, m)?;
    let times = default_times(&basis, a.samples)?;
    hks(&basis, &times)?.write_csv(&a.out)
}

pub fn cmd_embed(a: &EmbedArgs) -> Result<String> {
    let source: SurfaceMesh = load_surface_mesh(&a.source)?;
    let coarse = a.coarse.load()?;
    let map = embed_surface(&source, &coarse)?;
    let (max, mean) = map.residual_stats();
    Ok(format!(
        "vertices {}\nboundary faces {}\nmax residual {max:e}\nmean residual {mean:e}\n",
        map.len(),
        coarse.boundary_faces().len()
    ))
}
