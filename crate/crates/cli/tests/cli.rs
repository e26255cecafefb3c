use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bmvseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bmvseg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = bmvseg(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect()
}

fn small_scene(dir: &Path) -> PathBuf {
    let spec = dir.join("spec.json");
    fs::write(
        &spec,
        r#"{
            "width": 64, "height": 48, "frames": 8,
            "background": {"class": 0, "color": [60, 90, 60], "texture": 25, "texel": 3, "velocity": [1, 0]},
            "objects": [
                {"class": 1, "shape": {"type": "rect", "width": 20, "height": 14}, "color": [200, 60, 40],
                 "texture": 20, "texel": 2, "position": [6, 10], "velocity": [3, 1]}
            ]
        }"#,
    )
    .unwrap();
    let out = dir.join("scene");
    ok(&["make-scene", s(&spec), "-o", s(&out)]);
    out
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = bmvseg(&["run", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(bmvseg(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        bmvseg(&["sweep", "--intervals", "0..3"]).status.code(),
        Some(2)
    );
}

#[test]
fn failures_exit_one_with_a_single_line() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing");
    let out = bmvseg(&[
        "run",
        s(&missing),
        "--mode",
        "prop",
        "-o",
        s(&tmp.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.contains("missing"), "{err}");

    let scene = small_scene(tmp.path());
    let frames = scene.join("frames");
    let out = bmvseg(&[
        "run",
        s(&frames),
        "--mode",
        "inter",
        "--interval",
        "3",
        "--fusion",
        "conv",
        "-o",
        s(&tmp.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--fusion-weights"));
}

#[test]
fn interval_one_output_matches_baseline() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = small_scene(tmp.path());
    let frames = scene.join("frames");
    let base = tmp.path().join("base");
    ok(&["run", s(&frames), "--mode", "baseline", "-o", s(&base)]);
    for mode in ["prop", "inter"] {
        let out = tmp.path().join(mode);
        ok(&[
            "run",
            s(&frames),
            "--mode",
            mode,
            "--interval",
            "1",
            "-o",
            s(&out),
        ]);
        assert_eq!(dir_bytes(&out), dir_bytes(&base), "{mode}");
    }
}

#[test]
fn evaluating_against_itself_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = small_scene(tmp.path());
    let labels = scene.join("labels");
    let stdout = ok(&["evaluate", s(&labels), s(&labels), "--classes", "2"]);
    let first = stdout.lines().next().unwrap();
    let value: f64 = first.strip_prefix("mean_iou ").unwrap().parse().unwrap();
    assert_eq!(value, 1.0);
}

#[test]
fn sidecar_motion_gives_the_same_segmentation() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = small_scene(tmp.path());
    let frames = scene.join("frames");
    let sidecar = tmp.path().join("m.bmvs");
    ok(&[
        "estimate-motion",
        s(&frames),
        "-o",
        s(&sidecar),
        "--radius",
        "8",
    ]);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&[
        "run",
        s(&frames),
        "--mode",
        "inter",
        "--interval",
        "3",
        "--motion",
        s(&sidecar),
        "-o",
        s(&a),
    ]);
    ok(&[
        "run",
        s(&frames),
        "--mode",
        "inter",
        "--interval",
        "3",
        "--radius",
        "8",
        "-o",
        s(&b),
        "--workers",
        "2",
    ]);
    assert_eq!(dir_bytes(&a), dir_bytes(&b));
}

#[test]
fn scenes_are_deterministic_given_the_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let render = |name: &str, seed: &str| {
        let out = tmp.path().join(name);
        ok(&[
            "make-scene",
            "benchmark",
            "-o",
            s(&out),
            "--seed",
            seed,
            "--format",
            "png",
        ]);
        dir_bytes(&out.join("frames"))
    };
    let a = render("a", "3");
    assert_eq!(a.len(), 60);
    assert_eq!(a, render("b", "3"));
    assert_ne!(a, render("c", "4"));
}

struct Row {
    scheme: String,
    interval: usize,
    miou_avg: f64,
}

fn rows(csv: &str) -> Vec<Row> {
    let mut lines = csv.lines();
    assert!(lines
        .next()
        .unwrap()
        .starts_with("scheme,interval,miou_avg,miou_min,fps"));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            Row {
                scheme: f[0].to_string(),
                interval: f[1].parse().unwrap(),
                miou_avg: f[2].parse().unwrap(),
            }
        })
        .collect()
}

#[test]
fn bundled_scene_sweep_has_inter_dominating_prop() {
    let csv = ok(&[
        "sweep",
        "--intervals",
        "1..6",
        "--schemes",
        "prop,inter",
        "--repetitions",
        "1",
    ]);
    let rows = rows(&csv);
    assert_eq!(rows.len(), 12);
    for n in 1..=6 {
        let get = |scheme: &str| {
            rows.iter()
                .find(|r| r.scheme == scheme && r.interval == n)
                .unwrap()
                .miou_avg
        };
        assert!(get("inter") >= get("prop"), "n={n}: {csv}");
    }
}

#[test]
fn fitted_model_and_fusion_kernel_feed_back_into_run() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = small_scene(tmp.path());
    let model = tmp.path().join("model.json");
    let fusion = tmp.path().join("fusion.json");
    ok(&[
        "fit-model",
        "--scene",
        s(&scene),
        "-o",
        s(&model),
        "--fusion-out",
        s(&fusion),
        "--fusion-interval",
        "3",
    ]);
    let out = tmp.path().join("o");
    ok(&[
        "run",
        s(&scene.join("frames")),
        "--mode",
        "inter",
        "--interval",
        "3",
        "--fusion",
        "conv",
        "--fusion-weights",
        s(&fusion),
        "--model",
        s(&model),
        "-o",
        s(&out),
    ]);
    assert_eq!(fs::read_dir(&out).unwrap().count(), 8);
    let mismatch = bmvseg(&[
        "run",
        s(&scene.join("frames")),
        "--mode",
        "inter",
        "--fusion",
        "max",
        "--fusion-weights",
        s(&fusion),
        "-o",
        s(&out),
    ]);
    assert_eq!(mismatch.status.code(), Some(1));
}

#[test]
fn bench_reports_model_and_measurement() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = small_scene(tmp.path());
    let stdout = ok(&[
        "bench",
        "--scene",
        s(&scene),
        "--intervals",
        "1,4",
        "--repetitions",
        "1",
        "--radius",
        "8",
    ]);
    let data: Vec<&str> = stdout.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(data[0].starts_with("interval,model_baseline"));
    assert_eq!(data.len(), 3);
    for line in &data[1..] {
        let values: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert!(values.iter().all(|v| v.is_finite() && *v > 0.0), "{line}");
    }
}
