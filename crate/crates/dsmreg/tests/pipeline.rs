//! CLI contract tests: exit codes, machine-readable outputs, per-stage
//! determinism, and the file-based stage boundaries.

use std::path::Path;
use std::process::{Command, Output};

use dsmreg::geo::GeoTransform;
use dsmreg::io::{write_dsm, RasterFormat};
use dsmreg::raster::DsmGrid;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_dsmreg")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn dsmreg")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}",
            String::from_utf8_lossy(&out.stdout)
        )
    })
}

fn wavy_raster(dir: &Path, name: &str, offset: (f64, f64, f64)) -> String {
    let n = 80;
    let heights: Vec<f64> = (0..n * n)
        .map(|i| {
            let (u, v) = ((i % n) as f64, (i / n) as f64);
            let x = offset.0 + u;
            let y = offset.1 - v;
            30.0 + offset.2 + 6.0 * ((0.11 * x).sin() * (0.13 * y).cos()) + 3.0 * (0.05 * x).cos()
        })
        .collect();
    let g = DsmGrid::from_heights(
        n,
        n,
        heights,
        GeoTransform::north_up(offset.0, offset.1, 1.0),
        -9999.0,
    )
    .unwrap();
    let path = dir.join(name);
    write_dsm(&g, &path, RasterFormat::Binary).unwrap();
    path.display().to_string()
}

#[test]
fn help_exits_zero_on_every_command() {
    for cmd in ["register", "graph", "solve", "fuse", "eval", "synth"] {
        let out = Command::new(bin()).args([cmd, "--help"]).output().unwrap();
        assert!(out.status.success(), "{cmd} --help failed");
        let text = String::from_utf8_lossy(&out.stdout);
        assert!(text.contains("--help"), "{cmd} help must document flags");
    }
    let out = Command::new(bin()).arg("--help").output().unwrap();
    assert!(out.status.success());
    for flag in ["--config", "--seed", "--threads", "--out", "--log-level"] {
        assert!(
            String::from_utf8_lossy(&out.stdout).contains(flag),
            "global help must document {flag}"
        );
    }
}

#[test]
fn register_self_is_identity_with_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let a = wavy_raster(dir.path(), "a.dsmg", (0.0, 0.0, 0.0));
    let out = run_in(dir.path(), &["register", &a, &a]);
    assert!(out.status.success());
    let report = stdout_json(&out);
    assert!(report["err"].as_f64().unwrap() <= 1e-9);
    assert!(report["converged"].as_bool().unwrap());
    assert!(dir.path().join("register_report.json").exists());
}

#[test]
fn register_disjoint_exits_two_with_error_json() {
    let dir = tempfile::tempdir().unwrap();
    let a = wavy_raster(dir.path(), "a.dsmg", (0.0, 0.0, 0.0));
    let b = wavy_raster(dir.path(), "b.dsmg", (5000.0, 5000.0, 0.0));
    let out = run_in(dir.path(), &["register", &a, &b]);
    assert_eq!(out.status.code(), Some(2));
    let err = stdout_json(&out);
    assert_eq!(err["error"]["kind"], "no_overlap");
}

#[test]
fn register_missing_file_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let a = wavy_raster(dir.path(), "a.dsmg", (0.0, 0.0, 0.0));
    let out = run_in(dir.path(), &["register", &a, "missing.dsmg"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stdout_json(&out);
    assert_eq!(err["error"]["kind"], "io");
    assert!(
        err["error"]["message"]
            .as_str()
            .unwrap()
            .contains("missing.dsmg"),
        "error must name the offending file"
    );
}

#[test]
fn register_vertical_offset_recovers_shift() {
    let dir = tempfile::tempdir().unwrap();
    let reference = wavy_raster(dir.path(), "ref.dsmg", (0.0, 0.0, 0.0));
    let moving = wavy_raster(dir.path(), "mov.dsmg", (0.0, 0.0, 2.0));
    let out = run_in(dir.path(), &["register", &moving, &reference]);
    assert!(out.status.success());
    let report = stdout_json(&out);
    let tz = report["transform"]["translation"][2].as_f64().unwrap();
    assert!((tz + 2.0).abs() < 1e-3, "recovered t_z = {tz}");
}

#[test]
fn solve_disconnected_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let a = wavy_raster(dir.path(), "a.dsmg", (0.0, 0.0, 0.0));
    let b = wavy_raster(dir.path(), "b.dsmg", (20.0, 0.0, 0.5));
    let c = wavy_raster(dir.path(), "c.dsmg", (5000.0, 0.0, 0.0));
    let d = wavy_raster(dir.path(), "d.dsmg", (5020.0, 0.0, -0.5));
    let out = run_in(dir.path(), &["solve", &a, &b, &c, &d]);
    assert_eq!(out.status.code(), Some(3));
    let err = stdout_json(&out);
    assert_eq!(err["error"]["kind"], "disconnected_graph");
    assert!(err["error"]["message"].as_str().unwrap().contains("[0, 1]"));
}

#[test]
fn synth_is_byte_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "synth", "--size", "65", "--tiles", "2x2", "--seed", "5", "--noise-sigma", "0.2",
        "--nodata-fraction", "0.02",
    ];
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let mut run_a = args.to_vec();
    run_a.extend(["--out", out_a.to_str().unwrap()]);
    let mut run_b = args.to_vec();
    run_b.extend(["--out", out_b.to_str().unwrap()]);
    assert!(run_in(dir.path(), &run_a).status.success());
    assert!(run_in(dir.path(), &run_b).status.success());
    for name in ["terrain.dsmg", "tile_000.dsmg", "tile_003.dsmg", "truth.json"] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} must be byte-identical across runs");
    }
}

#[test]
fn solve_outputs_bitwise_reproducible_and_average_beats_greedy() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("scene");
    let out_s = out.to_str().unwrap();
    assert!(run_in(
        dir.path(),
        &[
            "synth", "--out", out_s, "--seed", "3", "--size", "201", "--tiles", "2x2",
            "--overlap", "0.35", "--relief", "90", "--rot-max-deg", "0.5",
            "--shift-max-px", "2", "--dz-max", "2",
        ]
    )
    .status
    .success());
    let tiles: Vec<String> = (0..4)
        .map(|i| out.join(format!("tile_{i:03}.dsmg")).display().to_string())
        .collect();
    let tile_refs: Vec<&str> = tiles.iter().map(|s| s.as_str()).collect();
    let graph_out = out.join("g");
    let mut graph_args = vec!["graph"];
    graph_args.extend(tile_refs.iter());
    graph_args.extend([
        "--out",
        graph_out.to_str().unwrap(),
        "--trim-fraction",
        "0",
        "--rel-tol",
        "1e-9",
        "--max-iterations",
        "150",
    ]);
    assert!(run_in(dir.path(), &graph_args).status.success());
    let graph_path = graph_out.join("graph.json").display().to_string();

    let mut poses = Vec::new();
    for (solver, sub) in [("average", "s1"), ("average", "s2"), ("greedy", "s3")] {
        let solve_out = out.join(sub);
        assert!(run_in(
            dir.path(),
            &[
                "solve", "--graph", &graph_path, "--solver", solver, "--out",
                solve_out.to_str().unwrap(), "--seed", "9",
            ]
        )
        .status
        .success());
        poses.push(std::fs::read(solve_out.join("poses.json")).unwrap());
    }
    assert_eq!(poses[0], poses[1], "same solver + seed must be bitwise equal");
    let avg: serde_json::Value = serde_json::from_slice(&poses[0]).unwrap();
    let greedy: serde_json::Value = serde_json::from_slice(&poses[2]).unwrap();
    let avg_obj = avg["objective"].as_f64().unwrap();
    let greedy_obj = greedy["objective"].as_f64().unwrap();
    assert!(
        avg_obj <= greedy_obj + 1e-9,
        "averaging objective {avg_obj} must not exceed greedy {greedy_obj}"
    );
}

#[test]
fn eval_identical_rasters_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let a = wavy_raster(dir.path(), "a.dsmg", (0.0, 0.0, 0.0));
    let out = run_in(dir.path(), &["eval", &a, &a]);
    assert!(out.status.success());
    let metrics = stdout_json(&out);
    assert_eq!(metrics["rmse_tau"].as_f64().unwrap(), 0.0);
    assert_eq!(metrics["inlier_ratio"].as_f64().unwrap(), 1.0);
}

#[test]
fn eval_constant_offset_reports_three() {
    let dir = tempfile::tempdir().unwrap();
    let a = wavy_raster(dir.path(), "a.dsmg", (0.0, 0.0, 3.0));
    let b = wavy_raster(dir.path(), "b.dsmg", (0.0, 0.0, 0.0));
    let out = run_in(dir.path(), &["eval", &a, &b, "--tau", "10"]);
    assert!(out.status.success());
    let metrics = stdout_json(&out);
    assert!((metrics["rmse_tau"].as_f64().unwrap() - 3.0).abs() < 1e-9);
}

#[test]
fn fuse_single_raster_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let a = wavy_raster(dir.path(), "a.dsmg", (0.0, 0.0, 0.0));
    let poses = serde_json::json!({
        "anchor": 0,
        "poses": [{"id": 0, "rotation": [1.0,0.0,0.0,0.0,1.0,0.0,0.0,0.0,1.0], "translation": [0.0,0.0,0.0]}],
    });
    let poses_path = dir.path().join("poses.json");
    std::fs::write(&poses_path, poses.to_string()).unwrap();
    let out = run_in(
        dir.path(),
        &["fuse", &a, "--poses", poses_path.to_str().unwrap()],
    );
    assert!(out.status.success());
    let fused = dir.path().join("fused.dsmg");
    let check = run_in(
        dir.path(),
        &["eval", fused.to_str().unwrap(), &a, "--tau", "10"],
    );
    assert!(check.status.success());
    let metrics = stdout_json(&check);
    assert!(metrics["rmse_tau"].as_f64().unwrap() < 1e-9);
    assert!(dir.path().join("contributors.dsmg").exists());
}

#[test]
fn config_file_supplies_defaults_and_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let a = wavy_raster(dir.path(), "a.dsmg", (0.0, 0.0, 3.0));
    let b = wavy_raster(dir.path(), "b.dsmg", (0.0, 0.0, 0.0));
    let config = dir.path().join("run.toml");
    std::fs::write(&config, "tau = 5.0\n[icp]\nn_queries = 500\n").unwrap();
    let out = run_in(
        dir.path(),
        &["eval", &a, &b, "--config", config.to_str().unwrap()],
    );
    assert!(out.status.success());
    let metrics = stdout_json(&out);
    assert!((metrics["rmse_tau"].as_f64().unwrap() - 3.0).abs() < 1e-9);

    std::fs::write(&config, "tau = 5.0\nmystery_knob = 1\n").unwrap();
    let out = run_in(
        dir.path(),
        &["eval", &a, &b, "--config", config.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(1), "unknown config keys must be rejected");
    let err = stdout_json(&out);
    assert_eq!(err["error"]["kind"], "parse");

    std::fs::write(&config, "tau = -2.0\n").unwrap();
    let out = run_in(
        dir.path(),
        &["eval", &a, &b, "--config", config.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(1), "invalid ranges must be rejected");
}

#[test]
fn eval_align_first_fixes_an_offset_fused_raster() {
    let dir = tempfile::tempdir().unwrap();
    let reference = wavy_raster(dir.path(), "ref.dsmg", (0.0, 0.0, 0.0));
    let shifted = wavy_raster(dir.path(), "shifted.dsmg", (0.0, 0.0, 1.5));
    let plain = run_in(dir.path(), &["eval", "--fused", &shifted, "--reference", &reference]);
    assert!(plain.status.success());
    let plain_rmse = stdout_json(&plain)["rmse_tau"].as_f64().unwrap();
    let aligned = run_in(
        dir.path(),
        &[
            "eval", "--fused", &shifted, "--reference", &reference, "--align-first",
        ],
    );
    assert!(aligned.status.success());
    let metrics = stdout_json(&aligned);
    let aligned_rmse = metrics["rmse_tau"].as_f64().unwrap();
    assert!(
        aligned_rmse < 0.1 * plain_rmse,
        "alignment must remove the offset: {aligned_rmse} vs {plain_rmse}"
    );
    assert!(metrics["align_transform"]["translation"][2].is_number());
}
