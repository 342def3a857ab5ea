//! C ABI for forcematch.
//!
//! Objects cross the boundary as opaque handles created by `fm_*_new` or
//! `fm_*_load` and released by the matching `fm_*_free`. Every fallible
//! function returns an [`FmStatus`]; on failure the message is available
//! from [`fm_last_error`] on the same thread until the next failing call.
//! Panics never unwind into C; they are reported as `FM_STATUS_PANIC`.
//!
//! Array arguments are flat: vertex positions as `x0 y0 z0 x1 …`, triangles
//! and tets as consecutive 0-based index tuples. Output arrays are filled by
//! copy-out functions that take the caller's buffer and its length in
//! elements; pass a null buffer to query the required length.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use forcematch::matcher::{MatchConfig, MatchResult, Matcher, Termination};
use forcematch::mesh::{load_surface_mesh, load_tet_mesh, SurfaceMesh, TetMesh, Vec3};
use forcematch::Error;

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    InvalidMesh = 5,
    Config = 6,
    Numerical = 7,
    NotConverged = 8,
    Aborted = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

/// How a match terminated.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FmTermination {
    Converged = 0,
    Stagnated = 1,
    IterationCap = 2,
}

/// Opaque triangle surface.
pub struct FmSurface(SurfaceMesh);

/// Opaque tetrahedral mesh.
pub struct FmTetMesh(TetMesh);

/// Opaque matcher configuration.
pub struct FmConfig(MatchConfig);

/// Opaque match result.
pub struct FmResult {
    result: MatchResult,
    boundary_nodes: Vec<usize>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> FmStatus {
    match e {
        Error::Io { .. } => FmStatus::Io,
        Error::Parse { .. } => FmStatus::Parse,
        Error::Validation(_) => FmStatus::InvalidMesh,
        Error::InvalidParameter(_) | Error::Dimension { .. } => FmStatus::InvalidArgument,
        Error::Config { .. } => FmStatus::Config,
        Error::NewtonNotConverged { .. } | Error::SocpMaxIterations { .. } | Error::Eigen { .. } => {
            FmStatus::NotConverged
        }
        Error::MatchAborted(_) => FmStatus::Aborted,
        _ => FmStatus::Numerical,
    }
}

struct Failure(FmStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FmStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            FmStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(FmStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg(p: *const c_char, what: &str) -> Result<String, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure(FmStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn points(flat: &[f64]) -> Vec<Vec3> {
    flat.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect()
}

/// Copies `values` into `out` (capacity `cap` elements) and stores the
/// required length in `len`. A null `out` only queries the length.
unsafe fn copy_out(values: &[f64], out: *mut f64, cap: usize, len: *mut usize) -> Result<(), Failure> {
    if !len.is_null() {
        *len = values.len();
    }
    if out.is_null() {
        return Ok(());
    }
    if cap < values.len() {
        return Err(Failure(
            FmStatus::BufferTooSmall,
            format!("buffer holds {cap} values, {} needed", values.len()),
        ));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    Ok(())
}

fn flatten(v: &[Vec3]) -> Vec<f64> {
    v.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads an OFF, OBJ or PLY surface.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_surface_load(path: *const c_char, out: *mut *mut FmSurface) -> FmStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        put(out, FmSurface(load_surface_mesh(&path)?))
    })
}

/// Builds a surface from `num_vertices` positions and `num_triangles`
/// index triples.
///
/// # Safety
/// `vertices` must hold `3 * num_vertices` doubles and `triangles`
/// `3 * num_triangles` indices; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_surface_new(
    vertices: *const f64,
    num_vertices: usize,
    triangles: *const u32,
    num_triangles: usize,
    out: *mut *mut FmSurface,
) -> FmStatus {
    guard(|| {
        let v = slice_arg(vertices, 3 * num_vertices, "vertices")?;
        let t = slice_arg(triangles, 3 * num_triangles, "triangles")?;
        let tris = t.chunks_exact(3).map(|c| [c[0] as usize, c[1] as usize, c[2] as usize]).collect();
        put(out, FmSurface(SurfaceMesh::new(points(v), tris)?))
    })
}

/// # Safety
/// `surface` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fm_surface_free(surface: *mut FmSurface) {
    if !surface.is_null() {
        drop(Box::from_raw(surface));
    }
}

/// Number of vertices, or 0 for a null handle.
///
/// # Safety
/// `surface` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fm_surface_num_vertices(surface: *const FmSurface) -> usize {
    surface.as_ref().map_or(0, |s| s.0.num_vertices())
}

/// Loads a `.node`/`.ele` pair.
///
/// # Safety
/// Both paths must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_tetmesh_load(
    node_path: *const c_char,
    ele_path: *const c_char,
    out: *mut *mut FmTetMesh,
) -> FmStatus {
    guard(|| {
        let n = PathBuf::from(str_arg(node_path, "node path")?);
        let e = PathBuf::from(str_arg(ele_path, "element path")?);
        put(out, FmTetMesh(load_tet_mesh(&n, &e)?))
    })
}

/// Builds a tet mesh from `num_nodes` positions and `num_tets` index
/// quadruples.
///
/// # Safety
/// `nodes` must hold `3 * num_nodes` doubles and `tets` `4 * num_tets`
/// indices; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_tetmesh_new(
    nodes: *const f64,
    num_nodes: usize,
    tets: *const u32,
    num_tets: usize,
    out: *mut *mut FmTetMesh,
) -> FmStatus {
    guard(|| {
        let n = slice_arg(nodes, 3 * num_nodes, "nodes")?;
        let t = slice_arg(tets, 4 * num_tets, "tets")?;
        let tets = t
            .chunks_exact(4)
            .map(|c| [c[0] as usize, c[1] as usize, c[2] as usize, c[3] as usize])
            .collect();
        put(out, FmTetMesh(TetMesh::new(points(n), tets)?))
    })
}

/// # Safety
/// `mesh` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fm_tetmesh_free(mesh: *mut FmTetMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

/// Number of boundary nodes, or 0 for a null handle.
///
/// # Safety
/// `mesh` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fm_tetmesh_num_boundary_nodes(mesh: *const FmTetMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.0.boundary_nodes().len())
}

/// Default configuration.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_config_new(out: *mut *mut FmConfig) -> FmStatus {
    guard(|| put(out, FmConfig(MatchConfig::default())))
}

/// Reads a `key = value` configuration file or run manifest on top of the
/// defaults.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_config_load(path: *const c_char, out: *mut *mut FmConfig) -> FmStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        put(out, FmConfig(MatchConfig::from_file(&path)?))
    })
}

/// Sets one configuration key from its text value.
///
/// # Safety
/// `config` must be a live handle; `key` and `value` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn fm_config_set(config: *mut FmConfig, key: *const c_char, value: *const c_char) -> FmStatus {
    guard(|| {
        let cfg = config.as_mut().ok_or_else(|| null("config"))?;
        let key = str_arg(key, "key")?;
        let value = str_arg(value, "value")?;
        cfg.0.set(&key, &value)?;
        Ok(())
    })
}

/// # Safety
/// `config` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fm_config_free(config: *mut FmConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Matches `source` (embedded in `coarse`) to `target`.
///
/// # Safety
/// All handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_match(
    config: *const FmConfig,
    source: *const FmSurface,
    target: *const FmSurface,
    coarse: *const FmTetMesh,
    out: *mut *mut FmResult,
) -> FmStatus {
    guard(|| {
        let cfg = handle(config, "config")?;
        let source = handle(source, "source")?;
        let target = handle(target, "target")?;
        let coarse = handle(coarse, "coarse")?;
        let result = Matcher::new(&cfg.0, &source.0, &coarse.0)?.run(&target.0)?;
        put(
            out,
            FmResult {
                result,
                boundary_nodes: coarse.0.boundary_nodes().to_vec(),
            },
        )
    })
}

/// # Safety
/// `result` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fm_result_free(result: *mut FmResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// # Safety
/// `result` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fm_result_termination(result: *const FmResult, out: *mut FmTermination) -> FmStatus {
    guard(|| {
        let r = handle(result, "result")?;
        let out = out.as_mut().ok_or_else(|| null("output"))?;
        *out = match r.result.termination {
            Termination::Converged => FmTermination::Converged,
            Termination::Stagnated => FmTermination::Stagnated,
            Termination::IterationCap => FmTermination::IterationCap,
        };
        Ok(())
    })
}

/// Number of outer iterations performed, or 0 for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fm_result_num_iterations(result: *const FmResult) -> usize {
    result.as_ref().map_or(0, |r| r.result.log.len())
}

/// Number of coarse boundary nodes, the row count of the force arrays.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fm_result_num_boundary_nodes(result: *const FmResult) -> usize {
    result.as_ref().map_or(0, |r| r.boundary_nodes.len())
}

/// Deformed fine surface positions, `3 × vertices` doubles.
///
/// # Safety
/// `result` must be a live handle; `out` null or holding `cap` doubles;
/// `len` null or writable.
#[no_mangle]
pub unsafe extern "C" fn fm_result_fine_vertices(
    result: *const FmResult,
    out: *mut f64,
    cap: usize,
    len: *mut usize,
) -> FmStatus {
    guard(|| copy_out(&flatten(&handle(result, "result")?.result.fine_deformation), out, cap, len))
}

/// Deformed coarse node positions, `3 × nodes` doubles.
///
/// # Safety
/// As for [`fm_result_fine_vertices`].
#[no_mangle]
pub unsafe extern "C" fn fm_result_coarse_nodes(
    result: *const FmResult,
    out: *mut f64,
    cap: usize,
    len: *mut usize,
) -> FmStatus {
    guard(|| copy_out(handle(result, "result")?.result.coarse_deformation.as_slice(), out, cap, len))
}

/// Boundary forces, `3 × boundary nodes` doubles in boundary order.
///
/// # Safety
/// As for [`fm_result_fine_vertices`].
#[no_mangle]
pub unsafe extern "C" fn fm_result_forces(result: *const FmResult, out: *mut f64, cap: usize, len: *mut usize) -> FmStatus {
    guard(|| copy_out(&flatten(&handle(result, "result")?.result.forces), out, cap, len))
}

/// Forces pulled back to the reference configuration, same layout as
/// [`fm_result_forces`].
///
/// # Safety
/// As for [`fm_result_fine_vertices`].
#[no_mangle]
pub unsafe extern "C" fn fm_result_pulled_back_forces(
    result: *const FmResult,
    out: *mut f64,
    cap: usize,
    len: *mut usize,
) -> FmStatus {
    guard(|| copy_out(&flatten(&handle(result, "result")?.result.pulled_back), out, cap, len))
}

/// Mesh node index of each boundary node, in boundary order.
///
/// # Safety
/// `result` must be a live handle; `out` null or holding `cap` values;
/// `len` null or writable.
#[no_mangle]
pub unsafe extern "C" fn fm_result_boundary_nodes(
    result: *const FmResult,
    out: *mut usize,
    cap: usize,
    len: *mut usize,
) -> FmStatus {
    guard(|| {
        let nodes = &handle(result, "result")?.boundary_nodes;
        if !len.is_null() {
            *len = nodes.len();
        }
        if out.is_null() {
            return Ok(());
        }
        if cap < nodes.len() {
            return Err(Failure(FmStatus::BufferTooSmall, format!("buffer holds {cap} values, {} needed", nodes.len())));
        }
        ptr::copy_nonoverlapping(nodes.as_ptr(), out, nodes.len());
        Ok(())
    })
}

/// Per-iteration force L1 norms from the log.
///
/// # Safety
/// As for [`fm_result_fine_vertices`].
#[no_mangle]
pub unsafe extern "C" fn fm_result_force_history(
    result: *const FmResult,
    out: *mut f64,
    cap: usize,
    len: *mut usize,
) -> FmStatus {
    guard(|| {
        let hist: Vec<f64> = handle(result, "result")?.result.log.iter().map(|r| r.force_l1).collect();
        copy_out(&hist, out, cap, len)
    })
}
