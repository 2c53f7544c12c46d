use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use authalic::mesh::{load_mesh, make_icosphere, save_mesh, MeshFormat, SimplicialSurface, ValidationOptions};
use nalgebra::Rotation3;

fn authalic() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_authalic"));
    // keep the caller's environment from leaking flag overrides into the tests
    for (k, _) in std::env::vars() {
        if k.starts_with("AUTHALIC_") {
            cmd.env_remove(k);
        }
    }
    cmd
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_mesh(dir: &Path, name: &str, surface: &SimplicialSurface) -> PathBuf {
    let path = dir.join(name);
    save_mesh(&path, MeshFormat::Auto, surface.vertices(), surface.faces()).unwrap();
    path
}

fn ellipsoid(dir: &Path) -> PathBuf {
    write_mesh(dir, "ellipsoid.off", &make_icosphere(2, [1.0, 0.8, 0.6]))
}

fn csv_rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(str::to_string).collect()
}

/// Drops the wall-clock column.
fn without_time(rows: &[String]) -> Vec<String> {
    rows.iter()
        .map(|r| r.rsplit_once(',').map(|(head, _)| head.to_string()).unwrap_or_default())
        .collect()
}

#[test]
fn param_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = ellipsoid(dir.path());
    let out = run(authalic()
        .arg("param")
        .arg(&mesh)
        .args(["--fpi-iters", "10", "--max-iters", "100", "--ls", "interp", "--grad-tol", "0", "--energy-tol", "0"])
        .arg("--out-dir")
        .arg(dir.path()));
    assert!(out.status.success());
    let summary = stdout(&out);
    assert!(summary.starts_with("SD/Mean = "), "{summary}");
    assert!(summary.contains("folds = 0"), "{summary}");

    let rows = csv_rows(&dir.path().join("ellipsoid.csv"));
    assert_eq!(rows[0], "iter,E_S,E_A,E,sd_over_mean,grad_norm,alpha,folds,elapsed_s");
    let alphas: Vec<f64> = rows[1..].iter().map(|r| r.split(',').nth(6).unwrap().parse().unwrap()).collect();
    let warmup = alphas.iter().take_while(|&&a| a == 0.0).count();
    assert!((1..=10).contains(&warmup));
    assert_eq!(rows.len() - 1, warmup + 100);

    let sphere = load_mesh(&dir.path().join("ellipsoid_sphere.obj"), MeshFormat::Auto, ValidationOptions::default()).unwrap();
    assert_eq!(sphere.num_vertices(), 162);
    assert!(sphere.vertices().iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
    let ids = fs::read_to_string(dir.path().join("ellipsoid_sphere.vid")).unwrap();
    assert_eq!(ids.lines().filter(|l| !l.starts_with('#')).count(), 162);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("ellipsoid_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "param");
    assert_eq!(manifest["parameters"]["solver"]["ls"], "interp");
    assert_eq!(manifest["parameters"]["solver"]["max_iters"], 100);
    assert_eq!(manifest["seed"], 0);
}

#[test]
fn reruns_are_reproducible_and_strategy_flag_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = ellipsoid(dir.path());
    let mut logs = Vec::new();
    for (name, ls) in [("a.csv", "interp"), ("b.csv", "interp"), ("c.csv", "bounded")] {
        let log = dir.path().join(name);
        let out = run(authalic()
            .arg("param")
            .arg(&mesh)
            .args(["--max-iters", "20", "--noise-sigma", "0.01", "--seed", "7", "--ls", ls])
            .arg("--out-dir")
            .arg(dir.path())
            .arg("--log")
            .arg(&log));
        assert!(out.status.success());
        logs.push(without_time(&csv_rows(&log)));
    }
    assert_eq!(logs[0], logs[1]);
    assert_ne!(logs[0], logs[2]);
}

#[test]
fn env_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = ellipsoid(dir.path());
    let out = run(authalic()
        .arg("param")
        .arg(&mesh)
        .env("AUTHALIC_FPI_ITERS", "0")
        .env("AUTHALIC_MAX_ITERS", "5")
        .env("AUTHALIC_GRAD_TOL", "0")
        .env("AUTHALIC_ENERGY_TOL", "0")
        .env("AUTHALIC_OUT_DIR", dir.path()));
    assert!(out.status.success());
    assert_eq!(csv_rows(&dir.path().join("ellipsoid.csv")).len(), 1 + 5);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = ellipsoid(dir.path());
    let missing = run(authalic().arg("param").arg(dir.path().join("nope.off")));
    assert_eq!(missing.status.code(), Some(2));
    let bad_flag = run(authalic().arg("param").arg(&mesh).args(["--ls", "golden"]));
    assert_eq!(bad_flag.status.code(), Some(2));
    let bad_c1 = run(authalic().arg("param").arg(&mesh).args(["--c1", "1.5"]));
    assert_eq!(bad_c1.status.code(), Some(2));
    let no_landmarks = run(authalic()
        .arg("register")
        .arg(&mesh)
        .arg(&mesh)
        .arg("--landmarks")
        .arg(dir.path().join("missing.txt")));
    assert_eq!(no_landmarks.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&no_landmarks.stderr).contains("landmark file"));
}

fn unit_sphere_files(dir: &Path) -> (PathBuf, PathBuf, PathBuf, PathBuf) {
    let s0 = make_icosphere(2, [1.0; 3]);
    let rot = Rotation3::from_euler_angles(0.2, -0.15, 0.1);
    let s1 = s0.with_vertices(s0.vertices().iter().map(|v| rot * v).collect()).unwrap();
    let m0 = write_mesh(dir, "m0.obj", &s0);
    let m1 = write_mesh(dir, "m1.obj", &s1);
    // the meshes are their own spherical maps
    let landmarks = dir.join("landmarks.txt");
    fs::write(&landmarks, "# rotated copies\n4 4\n41 41\n78 78\n102 102\n151 151\n").unwrap();
    (m0.clone(), m1.clone(), landmarks, dir.to_path_buf())
}

#[test]
fn register_then_morph() {
    let dir = tempfile::tempdir().unwrap();
    let (m0, m1, landmarks, out_dir) = unit_sphere_files(dir.path());
    let out = run(authalic()
        .arg("register")
        .arg(&m0)
        .arg(&m1)
        .arg("--landmarks")
        .arg(&landmarks)
        .arg("--sphere0")
        .arg(&m0)
        .arg("--sphere1")
        .arg(&m1)
        .arg("--out-dir")
        .arg(&out_dir));
    assert!(out.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("registration.json")).unwrap()).unwrap();
    let before = report["mismatch_before"].as_f64().unwrap();
    let after = report["mismatch_after"].as_f64().unwrap();
    assert!(after <= 0.1 * before, "{before} -> {after}");
    assert!(stdout(&out).contains("reduction"));
    let map = fs::read_to_string(out_dir.join("map.txt")).unwrap();
    assert_eq!(map.lines().filter(|l| !l.starts_with('#')).count(), 162);

    let frames = out_dir.join("frames");
    let out = run(authalic()
        .arg("morph")
        .arg(&m0)
        .arg(&m1)
        .arg("--map")
        .arg(out_dir.join("map.txt"))
        .args(["--frames", "4"])
        .arg("--out-dir")
        .arg(&frames));
    assert!(out.status.success());
    let ts: Vec<String> = stdout(&out).lines().map(|l| l.split(':').next().unwrap().to_string()).collect();
    assert_eq!(ts, ["t = 0.000000", "t = 0.333333", "t = 0.666667", "t = 1.000000"]);
    let first = load_mesh(&frames.join("frame_000.obj"), MeshFormat::Auto, ValidationOptions::default()).unwrap();
    let original = load_mesh(&m0, MeshFormat::Auto, ValidationOptions::default()).unwrap();
    assert_eq!(first.vertices(), original.vertices());
    assert_eq!(first.faces(), original.faces());
    assert!(frames.join("frame_003.obj").is_file());

    let single = run(authalic()
        .arg("morph")
        .arg(&m0)
        .arg(&m1)
        .arg("--map")
        .arg(out_dir.join("map.txt"))
        .args(["--frames", "1"]));
    assert_eq!(single.status.code(), Some(2));
}

#[test]
fn identical_meshes_register_without_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let (m0, _, landmarks, out_dir) = unit_sphere_files(dir.path());
    let out = run(authalic()
        .arg("register")
        .arg(&m0)
        .arg(&m0)
        .arg("--landmarks")
        .arg(&landmarks)
        .arg("--sphere0")
        .arg(&m0)
        .arg("--sphere1")
        .arg(&m0)
        .arg("--out-dir")
        .arg(&out_dir));
    assert!(out.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("registration.json")).unwrap()).unwrap();
    assert!(report["mismatch_after"].as_f64().unwrap() < 1e-12);
}

#[test]
fn check_passes_on_icosphere_and_reports_flipped_face() {
    let dir = tempfile::tempdir().unwrap();
    let s = make_icosphere(1, [1.0; 3]);
    let good = write_mesh(dir.path(), "ico.obj", &s);
    let out = run(authalic().arg("check").arg(&good).arg("--probe-eigen"));
    let text = stdout(&out);
    assert!(out.status.success(), "{text}");
    for name in ["mesh", "folds", "gradient", "hessian", "energy", "manifold", "eigen"] {
        assert!(text.contains(&format!("{name}: PASS")), "{text}");
    }
    assert!(text.contains("smallest eigenvalue") && text.contains("residual"));

    let mut faces = s.faces().to_vec();
    faces[0].swap(1, 2);
    let flipped = SimplicialSurface::new(s.vertices().to_vec(), faces).unwrap();
    let bad = write_mesh(dir.path(), "flipped.obj", &flipped);
    let out = run(authalic().arg("check").arg(&bad));
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("folds: FAIL - 1 folded faces"));
}
