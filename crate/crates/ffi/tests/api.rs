use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use forcematch::beam::{coarse_beam, fine_beam, BeamSpec};
use forcematch::mesh::io::{write_obj, write_tet_mesh};
use forcematch_ffi::*;

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn path_c(p: &Path) -> CString {
    cstr(p.to_str().unwrap())
}

fn last_error() -> String {
    let p = fm_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

const CUBE: [f64; 24] = [
    0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, //
    0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0,
];
const CUBE_TETS: [u32; 20] = [1, 2, 4, 7, 0, 1, 2, 4, 3, 1, 2, 7, 5, 1, 4, 7, 6, 2, 4, 7];

fn write_inputs(dir: &Path) {
    let spec = BeamSpec { width: 1.0, height: 2.0, coarse_xy: 2, coarse_z: 4, fine_xy: 6, fine_z: 12 };
    write_obj(&dir.join("source.obj"), &fine_beam(&spec).unwrap()).unwrap();
    write_tet_mesh(&dir.join("coarse.node"), &dir.join("coarse.ele"), &coarse_beam(&spec).unwrap()).unwrap();
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(fm_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn tet_mesh_from_arrays() {
    let mut mesh = ptr::null_mut();
    let st = unsafe { fm_tetmesh_new(CUBE.as_ptr(), 8, CUBE_TETS.as_ptr(), 5, &mut mesh) };
    assert_eq!(st, FmStatus::Ok);
    assert!(!mesh.is_null());
    assert_eq!(unsafe { fm_tetmesh_num_boundary_nodes(mesh) }, 8);
    unsafe { fm_tetmesh_free(mesh) };
}

#[test]
fn out_of_range_index_is_invalid_mesh() {
    let mut tets = CUBE_TETS;
    tets[3] = 99;
    let mut mesh = ptr::null_mut();
    let st = unsafe { fm_tetmesh_new(CUBE.as_ptr(), 8, tets.as_ptr(), 5, &mut mesh) };
    assert_eq!(st, FmStatus::InvalidMesh);
    assert!(mesh.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn null_arguments_are_reported() {
    let mut surf = ptr::null_mut();
    assert_eq!(unsafe { fm_surface_load(ptr::null(), &mut surf) }, FmStatus::NullPointer);
    assert!(last_error().contains("path"));
    assert_eq!(unsafe { fm_surface_new(ptr::null(), 3, ptr::null(), 1, &mut surf) }, FmStatus::NullPointer);
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { fm_config_new(ptr::null_mut()) }, FmStatus::NullPointer);
    assert_eq!(unsafe { fm_config_new(&mut cfg) }, FmStatus::Ok);
    let mut res = ptr::null_mut();
    let st = unsafe { fm_match(cfg, ptr::null(), ptr::null(), ptr::null(), &mut res) };
    assert_eq!(st, FmStatus::NullPointer);
    assert!(res.is_null());
    // Queries on null handles return zero, frees ignore null.
    unsafe {
        assert_eq!(fm_surface_num_vertices(ptr::null()), 0);
        assert_eq!(fm_result_num_iterations(ptr::null()), 0);
        fm_surface_free(ptr::null_mut());
        fm_result_free(ptr::null_mut());
        fm_config_free(cfg);
    }
}

#[test]
fn missing_file_is_io_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("nope.obj");
    let mut surf = ptr::null_mut();
    let st = unsafe { fm_surface_load(path_c(&p).as_ptr(), &mut surf) };
    assert_eq!(st, FmStatus::Io);
    assert!(last_error().contains("nope.obj"));
}

#[test]
fn config_keys_are_validated() {
    let mut cfg = ptr::null_mut();
    unsafe {
        assert_eq!(fm_config_new(&mut cfg), FmStatus::Ok);
        assert_eq!(fm_config_set(cfg, cstr("k_growth").as_ptr(), cstr("2").as_ptr()), FmStatus::Ok);
        assert_eq!(fm_config_set(cfg, cstr("no_such_key").as_ptr(), cstr("1").as_ptr()), FmStatus::Config);
        assert!(last_error().contains("no_such_key"));
        assert_eq!(fm_config_set(cfg, cstr("k_growth").as_ptr(), cstr("abc").as_ptr()), FmStatus::Config);
        fm_config_free(cfg);
    }
}

#[test]
fn match_round_trip_through_handles() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path());
    unsafe {
        let mut source = ptr::null_mut();
        assert_eq!(fm_surface_load(path_c(&dir.path().join("source.obj")).as_ptr(), &mut source), FmStatus::Ok);
        let mut coarse = ptr::null_mut();
        let st = fm_tetmesh_load(
            path_c(&dir.path().join("coarse.node")).as_ptr(),
            path_c(&dir.path().join("coarse.ele")).as_ptr(),
            &mut coarse,
        );
        assert_eq!(st, FmStatus::Ok, "{}", last_error());
        let mut cfg = ptr::null_mut();
        assert_eq!(fm_config_new(&mut cfg), FmStatus::Ok);
        assert_eq!(fm_config_set(cfg, cstr("descriptor_iterations").as_ptr(), cstr("0").as_ptr()), FmStatus::Ok);

        let mut res = ptr::null_mut();
        assert_eq!(fm_match(cfg, source, source, coarse, &mut res), FmStatus::Ok, "{}", last_error());
        let mut term = FmTermination::IterationCap;
        assert_eq!(fm_result_termination(res, &mut term), FmStatus::Ok);
        assert_eq!(term, FmTermination::Converged);
        let iters = fm_result_num_iterations(res);
        assert!(iters >= 1);

        let k = fm_result_num_boundary_nodes(res);
        assert_eq!(k, fm_tetmesh_num_boundary_nodes(coarse));
        let mut len = 0usize;
        assert_eq!(fm_result_forces(res, ptr::null_mut(), 0, &mut len), FmStatus::Ok);
        assert_eq!(len, 3 * k);
        let mut small = vec![0.0; len - 1];
        assert_eq!(fm_result_forces(res, small.as_mut_ptr(), small.len(), &mut len), FmStatus::BufferTooSmall);
        let mut forces = vec![f64::NAN; len];
        assert_eq!(fm_result_forces(res, forces.as_mut_ptr(), forces.len(), &mut len), FmStatus::Ok);
        assert!(forces.iter().all(|f| f.abs() < 1e-8));

        let nv = fm_surface_num_vertices(source);
        let mut fine = vec![0.0; 3 * nv];
        assert_eq!(fm_result_fine_vertices(res, fine.as_mut_ptr(), fine.len(), &mut len), FmStatus::Ok);
        assert_eq!(len, 3 * nv);

        let mut nodes = vec![0usize; k];
        assert_eq!(fm_result_boundary_nodes(res, nodes.as_mut_ptr(), k, &mut len), FmStatus::Ok);
        assert!(nodes.windows(2).all(|w| w[0] < w[1]));

        let mut hist = vec![0.0; iters];
        assert_eq!(fm_result_force_history(res, hist.as_mut_ptr(), iters, &mut len), FmStatus::Ok);
        assert_eq!(len, iters);

        fm_result_free(res);
        fm_config_free(cfg);
        fm_tetmesh_free(coarse);
        fm_surface_free(source);
    }
}

fn header() -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/forcematch.h")).unwrap()
}

#[test]
fn header_declares_every_export() {
    let h = header();
    let src = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .filter_map(|rest| rest.split('(').next())
        .collect();
    assert!(exports.len() > 20);
    for name in exports {
        assert!(h.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(h.contains("FM_STATUS_OK = 0"));
    assert!(h.contains("FM_TERMINATION_ITERATION_CAP = 2"));
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let inc = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("use.txt");
        std::fs::write(
            &file,
            "#include \"forcematch.h\"\nint main(void) { struct FmConfig *c = 0; return fm_config_new(&c) == FM_STATUS_OK ? 0 : 1; }\n",
        )
        .unwrap();
        let out = Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang, "-I"])
            .arg(&inc)
            .arg(&file)
            .output();
        match out {
            Ok(o) => assert!(o.status.success(), "{compiler}: {}", String::from_utf8_lossy(&o.stderr)),
            Err(_) => eprintln!("{compiler} not available; skipping"),
        }
    }
}
