use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::json;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_splatrace"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn splatrace")
}

fn write_json(dir: &Path, name: &str, value: serde_json::Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(&value).unwrap()).unwrap();
    p
}

fn scene_json() -> serde_json::Value {
    json!({
        "sh_degree": 0,
        "gaussians": [
            {"mean": [0.0, 0.0, 0.0], "rotation": [1, 0, 0, 0], "scale": [0.5, 0.3, 0.4], "opacity": 0.9, "sh": [[1.0, 0.2, -0.5]]},
            {"mean": [0.6, -0.3, -0.5], "rotation": [0.5, 0.5, -0.5, 0.5], "scale": [0.2, 0.4, 0.2], "opacity": 0.7, "sh": [[-0.4, 0.8, 0.5]]}
        ],
        "deformation": {
            "kind": "keyframes",
            "times": [0.0, 1.0],
            "deltas": [
                [{}, {}],
                [{"mean": [0.3, 0.0, 0.0]}, {"mean": [0.0, 0.2, 0.0], "scale": [0.05, 0.0, 0.0]}]
            ]
        }
    })
}

fn camera_json(effect: serde_json::Value) -> serde_json::Value {
    json!({
        "pose": {"position": [0.0, 0.0, 5.0], "orientation": [1, 0, 0, 0]},
        "sensor": {"width_px": 40, "height_px": 30, "sensor_width_mm": 36.0, "sensor_height_mm": 27.0, "focal_length_mm": 35.0},
        "effect": effect
    })
}

fn setup(effect: serde_json::Value) -> (tempfile::TempDir, PathBuf, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let scene = write_json(dir.path(), "scene.json", scene_json());
    let camera = write_json(dir.path(), "camera.json", camera_json(effect));
    (dir, scene, camera)
}

fn render(scene: &Path, camera: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "render",
        "--scene",
        scene.to_str().unwrap(),
        "--camera",
        camera.to_str().unwrap(),
        "--time",
        "0.5",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn render_writes_ppm() {
    let (dir, scene, camera) = setup(json!({"kind": "pinhole"}));
    let out = dir.path().join("f.ppm");
    let o = render(&scene, &camera, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let bytes = std::fs::read(&out).unwrap();
    assert!(bytes.starts_with(b"P6\n40 30\n255\n"));
    assert_eq!(bytes.len(), b"P6\n40 30\n255\n".len() + 40 * 30 * 3);
}

#[test]
fn empty_scene_renders_background() {
    let (dir, _, camera) = setup(json!({"kind": "pinhole"}));
    let scene = write_json(dir.path(), "empty.json", json!({"sh_degree": 0, "gaussians": []}));
    let out = dir.path().join("bg.ppm");
    let o = render(&scene, &camera, &out, &["--bg", "1,0.5,0"]);
    assert!(o.status.success());
    let bytes = std::fs::read(&out).unwrap();
    let raster = &bytes[b"P6\n40 30\n255\n".len()..];
    assert!(raster.chunks(3).all(|p| p == [255, 128, 0]));
}

#[test]
fn render_is_byte_identical_across_threads() {
    for effect in [
        json!({"kind": "dof", "focus_distance": 5.0, "aperture_radius": 0.2, "samples_per_pixel": 4, "rng_seed": 3}),
        json!({"kind": "rolling", "readout_time": 0.2, "time_scale": 1.0, "chunk_rows": 4}),
        json!({"kind": "fisheye", "k": [0.0, 0.06, 0.0, 0.0, 0.0]}),
    ] {
        let (dir, scene, camera) = setup(effect);
        let outputs: Vec<Vec<u8>> = ["1", "4", "8", "4"]
            .iter()
            .enumerate()
            .map(|(i, threads)| {
                let out = dir.path().join(format!("t{i}.ppm"));
                let o = render(&scene, &camera, &out, &["--threads", threads, "--tile", "7"]);
                assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
                std::fs::read(out).unwrap()
            })
            .collect();
        assert!(outputs.windows(2).all(|w| w[0] == w[1]));
    }
}

#[test]
fn sequence_names_frames() {
    let (dir, scene, camera) = setup(json!({"kind": "pinhole"}));
    let out_dir = dir.path().join("frames");
    let o = run(&[
        "sequence",
        "--scene",
        scene.to_str().unwrap(),
        "--camera",
        camera.to_str().unwrap(),
        "--t0",
        "0",
        "--t1",
        "1",
        "--frames",
        "3",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut names: Vec<String> = std::fs::read_dir(&out_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["frame_00000.ppm", "frame_00001.ppm", "frame_00002.ppm"]);
    // The first frame matches a single render at t0.
    let single = dir.path().join("single.ppm");
    let o = run(&[
        "render",
        "--scene",
        scene.to_str().unwrap(),
        "--camera",
        camera.to_str().unwrap(),
        "--time",
        "0",
        "--out",
        single.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(single).unwrap(), std::fs::read(out_dir.join("frame_00000.ppm")).unwrap());
}

#[test]
fn metrics_output() {
    let (dir, scene, camera) = setup(json!({"kind": "pinhole"}));
    let a = dir.path().join("a.ppm");
    assert!(render(&scene, &camera, &a, &[]).status.success());
    let o = run(&["metrics", "--a", a.to_str().unwrap(), "--b", a.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap(), "psnr=inf\nssim=1\n");

    let b = dir.path().join("b.ppm");
    assert!(render(&scene, &camera, &b, &["--bg", "0.1,0.1,0.1"]).status.success());
    let o = run(&["metrics", "--a", a.to_str().unwrap(), "--b", b.to_str().unwrap(), "--metric", "psnr", "--mask-diameter", "20"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let v: f64 = text.trim().strip_prefix("psnr=").unwrap().parse().unwrap();
    assert!(v.is_finite() && v > 0.0);
}

#[test]
fn input_errors_exit_2() {
    let (dir, _, camera) = setup(json!({"kind": "pinhole"}));
    let bad = write_json(
        dir.path(),
        "bad.json",
        json!({"sh_degree": 0, "gaussians": [{"mean": [0, 0, 0], "rotation": [1, 0, 0, 0], "scale": [0, 1, 1], "opacity": 0.5, "sh": [[0, 0, 0]]}]}),
    );
    let o = render(&bad, &camera, &dir.path().join("x.ppm"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("scale"), "{err}");

    let o = render(&dir.path().join("missing.json"), &camera, &dir.path().join("x.ppm"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(run(&["render", "--bogus"]).status.code(), Some(2));
}

#[test]
fn fit_writes_scene_and_trace() {
    let (dir, scene, camera) = setup(json!({"kind": "pinhole"}));
    let reference = dir.path().join("ref.ppm");
    let o = render(&scene, &camera, &reference, &[]);
    assert!(o.status.success());
    write_json(
        dir.path(),
        "refs.json",
        json!({"references": [
            {"image": "ref.ppm", "camera": "camera.json", "time": 0.5},
            {"image": "ref.ppm", "camera": camera_json(json!({"kind": "pinhole"})), "time": 0.5}
        ]}),
    );
    write_json(dir.path(), "fit.json", json!({"iterations": 5, "densify_interval": 0}));
    let out = dir.path().join("fitted.json");
    let trace = dir.path().join("trace.csv");
    let o = run(&[
        "fit",
        "--scene",
        scene.to_str().unwrap(),
        "--refs",
        dir.path().join("refs.json").to_str().unwrap(),
        "--config",
        dir.path().join("fit.json").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(trace).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "iteration,loss,psnr");
    assert_eq!(lines.len(), 6);
    let fitted: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(fitted["gaussians"].as_array().unwrap().len(), 2);
    assert_eq!(fitted["deformation"]["kind"], "keyframes");
}
