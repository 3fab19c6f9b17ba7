use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use polar6d::datagen::SceneConfig;
use polar6d::io::{read_json, read_scalar_pfm, read_vector_pfm, write_json, write_obj};
use polar6d::mesh::shapes;
use polar6d::sfp::ambiguous_angular_error;
use polar6d::{Camera, Pose};

fn polar6d(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polar6d")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn camera() -> Camera {
    Camera::new(500.0, 500.0, 39.5, 39.5, 80, 80).unwrap()
}

fn gt_pose() -> Pose {
    let r = nalgebra::Rotation3::from_euler_angles(0.5, -0.3, 0.8);
    Pose::new(r, nalgebra::Vector3::new(0.0, 0.0, 0.5)).unwrap()
}

/// Blob OBJ plus a scene config next to it.
fn scene_files(dir: &Path) -> PathBuf {
    let mut obj = Vec::new();
    write_obj(&shapes::asymmetric_blob(), &mut obj).unwrap();
    std::fs::write(dir.join("blob.obj"), obj).unwrap();
    let config = SceneConfig::new("blob.obj", gt_pose(), camera());
    let path = dir.join("scene.json");
    write_json(&path, &config).unwrap();
    path
}

#[test]
fn invert_dop_prints_json() {
    let out = polar6d(&["invert-dop", "--rho", "0", "--eta", "1.5"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["theta_d"], 0.0);
    assert_eq!(v["theta_s1"], 0.0);
    assert!((v["theta_s2"].as_f64().unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-9);

    let out = polar6d(&["invert-dop", "--rho", "0.5", "--eta", "1.5"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["theta_d"].is_null());
}

#[test]
fn usage_errors_exit_one() {
    let out = polar6d(&["invert-dop", "--rho", "0", "--eta", "1.5", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(polar6d(&[]).status.code(), Some(1));
    assert_eq!(polar6d(&["estimate", "--out", "x"]).status.code(), Some(1));
    assert_eq!(polar6d(&["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = polar6d(&["invert-dop", "--rho", "0.2", "--eta", "7"]);
    assert_eq!(out.status.code(), Some(2));
    let out =
        polar6d(&["estimate", "--stack", p(&dir.path().join("missing")), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn scene_with_unknown_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = scene_files(dir.path());
    let mut json: serde_json::Value = read_json(&config).unwrap();
    json["exposure"] = 2.0.into();
    std::fs::write(&config, json.to_string()).unwrap();
    let out = polar6d(&["synth", "--config", p(&config), "--out", p(&dir.path().join("s"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("exposure"));
}

#[test]
fn synth_estimate_normals_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let config = scene_files(d);
    let scene = d.join("scene");
    let normals = d.join("normals");

    assert_eq!(
        polar6d(&["synth", "--config", p(&config), "--out", p(&scene)]).status.code(),
        Some(0)
    );
    assert_eq!(
        polar6d(&["estimate", "--stack", p(&scene), "--out", p(&scene)]).status.code(),
        Some(0)
    );
    let gt_dop = read_scalar_pfm(&scene.join("gt_dop.pfm")).unwrap();
    let dop = read_scalar_pfm(&scene.join("dop.pfm")).unwrap();
    for (a, b) in gt_dop.iter().zip(dop.iter()) {
        // PFM stores f32.
        assert!((a - b).abs() < 1e-6);
    }

    let out = polar6d(&["normals", "--polar", p(&scene), "--eta", "1.5", "--out", p(&normals)]);
    assert_eq!(out.status.code(), Some(0));
    let truth = read_vector_pfm(&scene.join("normals.pfm")).unwrap();
    let n_d = read_vector_pfm(&normals.join("n_d.pfm")).unwrap();
    let frames = camera().viewing_frames();
    let errs: Vec<f64> = (0..truth.len())
        .filter_map(|i| Some(ambiguous_angular_error(&frames[i], &n_d[i]?, &truth[i]?)))
        .collect();
    assert!(errs.len() > 100);
    let mean = errs.iter().sum::<f64>() / errs.len() as f64;
    assert!(mean < 1e-3, "mean {mean}");

    let gt = scene.join("gt_pose.json");
    let out =
        polar6d(&["eval", "--gt", p(&gt), "--pred", p(&gt), "--mesh", p(&d.join("blob.obj"))]);
    assert_eq!(out.status.code(), Some(0));
    let csv = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "object,metric,value,threshold");
    assert!(lines[1].starts_with("blob,add,0,"));
    assert!(lines[2].starts_with("blob,adds,0,"));
    assert!(lines[3].starts_with("blob,add_recall,100,"));
}

#[test]
fn render_refine_and_vis() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let config = scene_files(d);
    let scene = d.join("scene");
    assert_eq!(
        polar6d(&["synth", "--config", p(&config), "--out", p(&scene)]).status.code(),
        Some(0)
    );
    assert_eq!(
        polar6d(&["estimate", "--stack", p(&scene), "--out", p(&scene)]).status.code(),
        Some(0)
    );

    let init = gt_pose()
        .perturbed(&nalgebra::Vector3::new(0.05, 0.0, 0.0), &nalgebra::Vector3::zeros())
        .unwrap();
    write_json(&d.join("init.json"), &init).unwrap();
    std::fs::write(d.join("opts.json"), r#"{"max_iters": 40, "restarts": 1}"#).unwrap();
    let refined = d.join("refined.json");
    let trace = d.join("trace.csv");
    let out = polar6d(&[
        "refine",
        "--init",
        p(&d.join("init.json")),
        "--obs",
        p(&scene),
        "--mesh",
        p(&d.join("blob.obj")),
        "--camera",
        p(&scene.join("camera.json")),
        "--options",
        p(&d.join("opts.json")),
        "--out",
        p(&refined),
        "--trace",
        p(&trace),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(summary["final_loss"].as_f64().unwrap() <= summary["initial_loss"].as_f64().unwrap());
    let _: Pose = read_json(&refined).unwrap();
    assert!(std::fs::read_to_string(&trace)
        .unwrap()
        .starts_with("iteration,loss,rot_err,trans_err\n"));

    let render = d.join("render");
    let out = polar6d(&[
        "render",
        "--mesh",
        p(&d.join("blob.obj")),
        "--pose",
        p(&refined),
        "--camera",
        p(&scene.join("camera.json")),
        "--out",
        p(&render),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(render.join("normals.pfm").is_file() && render.join("mask.pfm").is_file());

    let png = d.join("n.png");
    let out = polar6d(&[
        "vis",
        "--in",
        p(&render.join("normals.pfm")),
        "--out",
        p(&png),
        "--kind",
        "normal",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(&std::fs::read(&png).unwrap()[..4], b"\x89PNG");
    let out = polar6d(&[
        "vis",
        "--in",
        p(&render.join("normals.pfm")),
        "--out",
        p(&png),
        "--kind",
        "dop",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_is_independent_of_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let config = scene_files(dir.path());
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out_dir = dir.path().join(format!("t{threads}"));
        let status = Command::new(env!("CARGO_BIN_EXE_polar6d"))
            .env("POLAR6D_THREADS", threads)
            .args(["synth", "--config", p(&config), "--out", p(&out_dir)])
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push(std::fs::read(out_dir.join("intensity_01.pfm")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);

    let bad = Command::new(env!("CARGO_BIN_EXE_polar6d"))
        .env("POLAR6D_THREADS", "zero")
        .args(["invert-dop", "--rho", "0", "--eta", "1.5"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}
