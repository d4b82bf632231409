//! Exercises the C ABI from Rust, plus a real C client compiled against
//! the generated header and static library.

use std::ffi::{CStr, CString};

use dsmreg::geo::GeoTransform;
use dsmreg::io::{write_dsm, RasterFormat};
use dsmreg::raster::DsmGrid;
use dsmreg_ffi::*;

fn wavy(dir: &std::path::Path, name: &str, dz: f64) -> CString {
    let n = 60;
    let heights: Vec<f64> = (0..n * n)
        .map(|i| {
            let (u, v) = ((i % n) as f64, (i / n) as f64);
            25.0 + dz + 5.0 * ((0.13 * u).sin() * (0.11 * v).cos())
        })
        .collect();
    let g = DsmGrid::from_heights(n, n, heights, GeoTransform::north_up(0.0, 0.0, 1.0), -9999.0)
        .unwrap();
    let path = dir.join(name);
    write_dsm(&g, &path, RasterFormat::Binary).unwrap();
    CString::new(path.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(dsmreg_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(dsmreg_version()) };
    assert!(!v.to_bytes().is_empty());
}

#[test]
fn open_missing_file_reports_io_error() {
    let path = CString::new("/nonexistent/raster.dsmg").unwrap();
    let mut grid: *mut DsmregGrid = std::ptr::null_mut();
    let status = unsafe { dsmreg_grid_open(path.as_ptr(), &mut grid) };
    assert_eq!(status, DsmregStatus::Io);
    assert!(grid.is_null());
    assert!(last_error().contains("raster.dsmg"));
}

#[test]
fn grid_accessors_and_window() {
    let dir = tempfile::tempdir().unwrap();
    let path = wavy(dir.path(), "a.dsmg", 0.0);
    let mut grid: *mut DsmregGrid = std::ptr::null_mut();
    assert_eq!(
        unsafe { dsmreg_grid_open(path.as_ptr(), &mut grid) },
        DsmregStatus::Ok
    );
    unsafe {
        assert_eq!(dsmreg_grid_width(grid), 60);
        assert_eq!(dsmreg_grid_height(grid), 60);
        assert_eq!(dsmreg_grid_nodata(grid), -9999.0);
        let mut gt = [0.0f64; 6];
        assert_eq!(dsmreg_grid_geotransform(grid, gt.as_mut_ptr()), DsmregStatus::Ok);
        assert_eq!(gt[0], 1.0); // x_scale
        assert_eq!(gt[3], -1.0); // y_scale

        let mut heights = vec![0.0f64; 25];
        let mut mask = vec![0u8; 25];
        let (mut w, mut h) = (0u64, 0u64);
        let status = dsmreg_grid_read_window(
            grid, 10, 14, 20, 24,
            heights.as_mut_ptr(), mask.as_mut_ptr(), 25, &mut w, &mut h,
        );
        assert_eq!(status, DsmregStatus::Ok);
        assert_eq!((w, h), (5, 5));
        assert!(mask.iter().all(|&m| m == 1));

        // Capacity too small is an argument error, not a crash.
        let status = dsmreg_grid_read_window(
            grid, 0, 59, 0, 59,
            heights.as_mut_ptr(), mask.as_mut_ptr(), 25, &mut w, &mut h,
        );
        assert_eq!(status, DsmregStatus::InvalidArgument);

        dsmreg_grid_free(grid);
    }
}

#[test]
fn register_pair_through_c_abi() {
    let dir = tempfile::tempdir().unwrap();
    let ref_path = wavy(dir.path(), "ref.dsmg", 0.0);
    let mov_path = wavy(dir.path(), "mov.dsmg", 1.5);
    unsafe {
        let mut reference: *mut DsmregGrid = std::ptr::null_mut();
        let mut moving: *mut DsmregGrid = std::ptr::null_mut();
        assert_eq!(dsmreg_grid_open(ref_path.as_ptr(), &mut reference), DsmregStatus::Ok);
        assert_eq!(dsmreg_grid_open(mov_path.as_ptr(), &mut moving), DsmregStatus::Ok);

        let mut params = std::mem::zeroed::<DsmregIcpParams>();
        dsmreg_icp_params_default(&mut params);
        assert_eq!(params.n_queries, 2065);

        let mut out = std::mem::zeroed::<DsmregRegistration>();
        let status = dsmreg_register(moving, reference, &params, &mut out);
        assert_eq!(status, DsmregStatus::Ok);
        assert!(out.converged);
        assert!((out.translation[2] + 1.5).abs() < 1e-3, "t_z = {}", out.translation[2]);

        dsmreg_grid_free(moving);
        dsmreg_grid_free(reference);
    }
}

#[test]
fn motion_average_and_greedy_through_c_abi() {
    // Consistent 3-vertex triangle; identity rotations, known shifts.
    let identity = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    let edges = [
        DsmregEdge { i: 0, j: 1, rotation: identity, translation: [1.0, 0.0, 0.0], weight: 1.0 },
        DsmregEdge { i: 1, j: 2, rotation: identity, translation: [0.0, 2.0, 0.0], weight: 1.0 },
        DsmregEdge { i: 0, j: 2, rotation: identity, translation: [1.0, 2.0, 0.0], weight: 1.0 },
    ];
    unsafe {
        let mut poses = [std::mem::zeroed::<DsmregPose>(); 3];
        let mut objective = f64::NAN;
        let status = dsmreg_motion_average(
            3, edges.as_ptr(), edges.len(), 0, poses.as_mut_ptr(), &mut objective,
        );
        assert_eq!(status, DsmregStatus::Ok);
        assert!(objective < 1e-12);
        assert!((poses[1].translation[0] - 1.0).abs() < 1e-9);
        assert!((poses[2].translation[1] - 2.0).abs() < 1e-9);

        let status = dsmreg_greedy_mst(
            3, edges.as_ptr(), edges.len(), 0, poses.as_mut_ptr(), &mut objective,
        );
        assert_eq!(status, DsmregStatus::Ok);
        assert!((poses[2].translation[0] - 1.0).abs() < 1e-12);

        // Disconnected graph surfaces as a graph error.
        let lonely = [edges[0]];
        let status = dsmreg_motion_average(
            4, lonely.as_ptr(), lonely.len(), 0, [std::mem::zeroed::<DsmregPose>(); 4].as_mut_ptr(), std::ptr::null_mut(),
        );
        assert_eq!(status, DsmregStatus::Graph);
        assert!(last_error().contains("disconnected"));
    }
}

#[test]
fn c_client_compiles_and_runs_against_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let raster = wavy(dir.path(), "c_demo.dsmg", 0.0);
    let manifest = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let include_dir = manifest.join("include");
    // The staticlib sits next to this test binary's profile directory.
    let mut lib_dir = std::path::PathBuf::from(std::env::current_exe().unwrap());
    lib_dir.pop(); // test binary name
    lib_dir.pop(); // deps/
    let static_lib = lib_dir.join("libdsmreg_ffi.a");
    assert!(
        static_lib.exists(),
        "staticlib not found at {}",
        static_lib.display()
    );

    let c_source = r#"
#include <assert.h>
#include <stdio.h>
#include <dsmreg.h>

int main(int argc, char **argv) {
    assert(argc == 2);
    DsmregGrid *grid = NULL;
    DsmregStatus status = dsmreg_grid_open(argv[1], &grid);
    if (status != DSMREG_STATUS_OK) {
        fprintf(stderr, "open failed: %s\n", dsmreg_last_error_message());
        return 1;
    }
    printf("%llu %llu\n",
           (unsigned long long)dsmreg_grid_width(grid),
           (unsigned long long)dsmreg_grid_height(grid));
    DsmregRegistration reg;
    status = dsmreg_register(grid, grid, NULL, &reg);
    if (status != DSMREG_STATUS_OK || !reg.converged || reg.err > 1e-9) {
        fprintf(stderr, "self registration failed\n");
        return 2;
    }
    dsmreg_grid_free(grid);
    return 0;
}
"#;
    let src_path = dir.path().join("demo.c");
    std::fs::write(&src_path, c_source).unwrap();
    let exe_path = dir.path().join("demo");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".to_string());
    let compile = std::process::Command::new(&cc)
        .arg(&src_path)
        .arg("-I")
        .arg(&include_dir)
        .arg(static_lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe_path)
        .output()
        .expect("spawn C compiler");
    assert!(
        compile.status.success(),
        "C compile failed: {}",
        String::from_utf8_lossy(&compile.stderr)
    );
    let run = std::process::Command::new(&exe_path)
        .arg(raster.to_str().unwrap())
        .output()
        .expect("run C client");
    assert!(
        run.status.success(),
        "C client failed: {}",
        String::from_utf8_lossy(&run.stderr)
    );
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "60 60");
}
