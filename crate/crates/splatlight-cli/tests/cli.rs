//! End-to-end tests for the `splatlight` binary: every subcommand runs
//! against a small generated scene, and the documented exit codes hold.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use splatlight::img::Image;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_splatlight"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn splatlight");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(cmd: &mut Command) -> i32 {
    cmd.output().expect("spawn splatlight").status.code().expect("exit code")
}

/// Generates a small arm scene (24-texel grid, 64 dome lights) into `dir`.
fn gen_scene(dir: &Path) -> PathBuf {
    let out = dir.join("gen");
    run_ok(bin().args([
        "gen-scene",
        "--rig",
        "arm",
        "--grid",
        "24",
        "--light-count",
        "64",
        "--out",
        out.to_str().unwrap(),
    ]));
    out
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_scene_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = gen_scene(tmp.path());
    for name in ["scene.json", "scene.bin", "lights.json", "camera.json", "pose.json"] {
        assert!(gen.join(name).is_file(), "missing {name}");
    }
    // The generated scene must load back through the library.
    let scene = splatlight::scene_io::load_scene(&gen.join("scene.json")).unwrap();
    assert!(!scene.primitives.is_empty());
}

#[test]
fn render_writes_image_gbuffer_and_metadata() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = gen_scene(tmp.path());
    let out = tmp.path().join("render");
    run_ok(bin().args([
        "render",
        "--scene",
        arg(&gen.join("scene.json")),
        "--camera",
        arg(&gen.join("camera.json")),
        "--lights",
        arg(&gen.join("lights.json")),
        "--spp",
        "4",
        "--out",
        arg(&out),
    ]));
    for name in [
        "render.pfm",
        "render.png",
        "gbuffer_diffuse.pfm",
        "gbuffer_normal.pfm",
        "gbuffer_alpha.pfm",
        "shadow_uv.pfm",
        "meta.json",
    ] {
        assert!(out.join(name).is_file(), "missing {name}");
    }
    let img = Image::read_pfm(&out.join("render.pfm")).unwrap();
    assert_eq!((img.width(), img.height(), img.channels()), (256, 256, 3));
    assert!(img.data().iter().any(|v| *v > 0.0), "render is all black");
}

#[test]
fn render_without_any_lighting_is_malformed() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = gen_scene(tmp.path());
    let code = exit_code(bin().args([
        "render",
        "--scene",
        arg(&gen.join("scene.json")),
        "--camera",
        arg(&gen.join("camera.json")),
        "--out",
        arg(&tmp.path().join("x")),
    ]));
    assert_eq!(code, 3);
}

#[test]
fn unknown_flag_is_malformed() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = gen_scene(tmp.path());
    let code = exit_code(bin().args([
        "render",
        "--scene",
        arg(&gen.join("scene.json")),
        "--camera",
        arg(&gen.join("camera.json")),
        "--lights",
        arg(&gen.join("lights.json")),
        "--flag",
        "shadow=sideways",
        "--out",
        arg(&tmp.path().join("x")),
    ]));
    assert_eq!(code, 3);
}

#[test]
fn bad_command_line_is_malformed_and_help_is_not() {
    assert_eq!(exit_code(bin().arg("no-such-subcommand")), 3);
    assert_eq!(exit_code(bin().arg("--help")), 0);
    assert_eq!(exit_code(bin().arg("--version")), 0);
}

#[test]
fn relight_with_all_lights_off_renders_black() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = gen_scene(tmp.path());
    let sweep = tmp.path().join("sweep.json");
    std::fs::write(&sweep, r#"{"light_subsets": [[0, 1, 2], []]}"#).unwrap();
    let out = tmp.path().join("frames");
    run_ok(bin().args([
        "relight",
        "--scene",
        arg(&gen.join("scene.json")),
        "--camera",
        arg(&gen.join("camera.json")),
        "--lights",
        arg(&gen.join("lights.json")),
        "--sweep",
        arg(&sweep),
        "--spp",
        "4",
        "--out",
        arg(&out),
    ]));
    let lit = Image::read_pfm(&out.join("frame_000.pfm")).unwrap();
    assert!(lit.data().iter().any(|v| *v > 0.0), "lit frame is black");
    let dark = Image::read_pfm(&out.join("frame_001.pfm")).unwrap();
    assert!(dark.data().iter().all(|v| *v == 0.0), "all-lights-off frame is not black");
}

#[test]
fn relight_scores_frames_against_references() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = gen_scene(tmp.path());
    let sweep = tmp.path().join("sweep.json");
    std::fs::write(&sweep, r#"{"light_subsets": [[0, 1, 2], [5, 6]]}"#).unwrap();
    let first = tmp.path().join("first");
    let common = |out: &Path| {
        let mut c = bin();
        c.args([
            "relight",
            "--scene",
            arg(&gen.join("scene.json")),
            "--camera",
            arg(&gen.join("camera.json")),
            "--lights",
            arg(&gen.join("lights.json")),
            "--sweep",
            arg(&sweep),
            "--spp",
            "4",
            "--out",
            arg(out),
        ]);
        c
    };
    run_ok(&mut common(&first));
    let second = tmp.path().join("second");
    run_ok(common(&second).args(["--reference", arg(&first)]));
    let csv = std::fs::read_to_string(second.join("psnr.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("frame,psnr"));
    // The two runs are identical, so PSNR against the references is infinite.
    for line in lines {
        assert!(line.ends_with("inf"), "expected infinite PSNR, got {line}");
    }
}

#[test]
fn irradiance_writes_a_unit_bounded_map() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = gen_scene(tmp.path());
    let out = tmp.path().join("irr");
    run_ok(bin().args([
        "irradiance",
        "--scene",
        arg(&gen.join("scene.json")),
        "--lights",
        arg(&gen.join("lights.json")),
        "--spp",
        "0",
        "--out",
        arg(&out),
    ]));
    let img = Image::read_pfm(&out.join("irradiance.pfm")).unwrap();
    assert_eq!(img.channels(), 1);
    assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("irradiance.json")).unwrap())
            .unwrap();
    assert!(meta["occupied"].as_u64().unwrap() > 0);
}

#[test]
fn fit_writes_trace_summary_and_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = gen_scene(tmp.path());
    let job = tmp.path().join("job.json");
    std::fs::write(
        &job,
        r#"{
            "steps": 8,
            "trace_every": 4,
            "train": [{"angles": [0.3, 0.4], "light_indices": [0, 1, 2, 3, 4, 5]}],
            "holdout": [{"angles": [0.3, 0.4], "light_indices": [8, 9, 10]}]
        }"#,
    )
    .unwrap();
    let out = tmp.path().join("fit");
    run_ok(bin().args([
        "fit",
        "--scene",
        arg(&gen.join("scene.json")),
        "--camera",
        arg(&gen.join("camera.json")),
        "--lights",
        arg(&gen.join("lights.json")),
        "--config",
        arg(&job),
        "--spp",
        "0",
        "--flag",
        "shadow=off",
        "--out",
        arg(&out),
    ]));
    let trace = splatlight::scene_io::read_trace_csv(&out.join("trace.csv")).unwrap();
    assert!(!trace.is_empty());
    assert_eq!(trace.last().unwrap().step, 8);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("fit_summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["steps"], 8);
    assert!(summary["holdout"].as_array().unwrap().len() == 1);
    // The fitted checkpoint is a loadable scene file.
    let fitted = splatlight::scene_io::load_scene(&out.join("fitted_scene.json")).unwrap();
    assert!(!fitted.primitives.is_empty());
}

#[test]
fn fit_rejects_forward_mode() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = gen_scene(tmp.path());
    let job = tmp.path().join("job.json");
    std::fs::write(&job, r#"{"steps": 2, "train": [{"angles": [0.0, 0.0]}]}"#).unwrap();
    let code = exit_code(bin().args([
        "fit",
        "--scene",
        arg(&gen.join("scene.json")),
        "--camera",
        arg(&gen.join("camera.json")),
        "--lights",
        arg(&gen.join("lights.json")),
        "--config",
        arg(&job),
        "--flag",
        "deferred=off",
        "--out",
        arg(&tmp.path().join("x")),
    ]));
    assert_eq!(code, 3);
}

#[test]
fn validate_reports_pass_and_rejects_unknown_suites() {
    let tmp = tempfile::tempdir().unwrap();
    let report = tmp.path().join("report.json");
    run_ok(bin().args(["validate", "--suite", "splat", "--out", arg(&report)]));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(doc["passed"], true);
    assert_eq!(exit_code(bin().args(["validate", "--suite", "nonsense"])), 3);
}

#[test]
fn renders_are_bitwise_identical_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = gen_scene(tmp.path());
    let mut images: Vec<Vec<u8>> = Vec::new();
    for threads in ["1", "4"] {
        let out = tmp.path().join(format!("t{threads}"));
        let mut cmd = bin();
        cmd.env("PRT_THREADS", threads);
        run_ok(cmd.args([
            "render",
            "--scene",
            arg(&gen.join("scene.json")),
            "--camera",
            arg(&gen.join("camera.json")),
            "--lights",
            arg(&gen.join("lights.json")),
            "--spp",
            "8",
            "--seed",
            "7",
            "--out",
            arg(&out),
        ]));
        images.push(std::fs::read(out.join("render.pfm")).unwrap());
    }
    assert_eq!(images[0], images[1], "render bytes differ across thread counts");
}

#[test]
fn invalid_thread_cap_is_malformed() {
    let mut cmd = bin();
    cmd.env("PRT_THREADS", "zero?");
    assert_eq!(exit_code(cmd.args(["validate", "--suite", "splat"])), 3);
}
