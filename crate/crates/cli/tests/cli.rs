use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use asn_core::io::{
    context_to_bytes, depth_to_pfm, read_pfm, vectors_to_pfm, write_intrinsics, write_pfm,
};
use asn_core::{gen_scene, ContextMap, SceneSpec};
use tempfile::TempDir;

fn asn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_asn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Corner scene files: depth, noisy depth, normals, one-hot context, intrinsics.
struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let spec = SceneSpec::corner(24, 18, 20.0);
        let scene = gen_scene(&spec).unwrap();
        let noisy = gen_scene(&spec.with_noise(0.02, 1)).unwrap();
        let put =
            |name: &str, bytes: Vec<u8>| std::fs::write(dir.path().join(name), bytes).unwrap();
        put("depth.pfm", write_pfm(&depth_to_pfm(&scene.depth)).unwrap());
        put("noisy.pfm", write_pfm(&depth_to_pfm(&noisy.depth)).unwrap());
        put(
            "normals.pfm",
            write_pfm(&vectors_to_pfm(&scene.normals)).unwrap(),
        );
        put(
            "context.pfm",
            context_to_bytes(scene.context.as_ref().unwrap()).unwrap(),
        );
        // One channel whose intensity steps at the crease.
        let labels = scene.labels.as_ref().unwrap();
        let step =
            ContextMap::new(24, 18, 1, labels.iter().map(|&l| 10.0 * l as f64).collect()).unwrap();
        put("step.pfm", context_to_bytes(&step).unwrap());
        put("k.json", write_intrinsics(&spec.intrinsics).into_bytes());
        Self { dir }
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).to_str().unwrap().to_owned()
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn image(path: &Path) -> asn_core::io::PfmImage {
    read_pfm(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn normals_writes_a_three_channel_image() {
    let f = Fixture::new();
    for method in ["asn", "sobel", "lsq", "average"] {
        let out = f.path(&format!("{method}.pfm"));
        let o = asn(&[
            "normals",
            "--method",
            method,
            "--depth",
            &f.path("depth.pfm"),
            "--intrinsics",
            &f.path("k.json"),
            "--context",
            &f.path("context.pfm"),
            "--out",
            &out,
        ]);
        assert!(o.status.success(), "{method}: {}", stderr(&o));
        let img = image(Path::new(&out));
        assert_eq!((img.width, img.height, img.channels), (24, 18, 3));
    }
}

#[test]
fn missing_flag_is_named_and_exits_1() {
    let o = asn(&["normals", "--method", "lsq"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--depth"));
    assert_eq!(asn(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        asn(&["experiment", "window", "--bogus"]).status.code(),
        Some(1)
    );
    assert_eq!(asn(&["--help"]).status.code(), Some(0));
}

#[test]
fn file_problems_exit_2_and_bad_values_exit_1() {
    let f = Fixture::new();
    let o = asn(&[
        "unproject",
        "--depth",
        &f.path("absent.pfm"),
        "--intrinsics",
        &f.path("k.json"),
        "--out",
        &f.path("p.pfm"),
    ]);
    assert_eq!(o.status.code(), Some(2));

    std::fs::write(f.out("bad.pfm"), b"P6\n1 1\n-1.0\n0000").unwrap();
    let o = asn(&[
        "unproject",
        "--depth",
        &f.path("bad.pfm"),
        "--intrinsics",
        &f.path("k.json"),
        "--out",
        &f.path("p.pfm"),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad magic"));

    std::fs::write(
        f.out("neg.json"),
        r#"{"fx": -1, "fy": 1, "cx": 0, "cy": 0}"#,
    )
    .unwrap();
    let o = asn(&[
        "unproject",
        "--depth",
        &f.path("depth.pfm"),
        "--intrinsics",
        &f.path("neg.json"),
        "--out",
        &f.path("p.pfm"),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("fx must be positive"));

    let o = asn(&[
        "normals",
        "--method",
        "asn",
        "--patch",
        "4",
        "--depth",
        &f.path("depth.pfm"),
        "--intrinsics",
        &f.path("k.json"),
        "--out",
        &f.path("n.pfm"),
    ]);
    assert_eq!(o.status.code(), Some(1));

    let o = asn(&[
        "unproject",
        "--depth",
        &f.path("depth.pfm"),
        "--intrinsics",
        &f.path("k.json"),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--out"));
}

#[test]
fn unproject_guidance_and_sample() {
    let f = Fixture::new();
    let o = asn(&[
        "unproject",
        "--depth",
        &f.path("depth.pfm"),
        "--intrinsics",
        &f.path("k.json"),
        "--out",
        &f.path("p.pfm"),
    ]);
    assert!(o.status.success());
    assert_eq!(image(&f.out("p.pfm")).channels, 3);

    for order in ["1", "2"] {
        let o = asn(&[
            "guidance",
            "--context",
            &f.path("step.pfm"),
            "--order",
            order,
            "--out",
            &f.path("g.pfm"),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let g = image(&f.out("g.pfm"));
        assert_eq!(g.channels, 1);
        assert_eq!(g.data.iter().cloned().fold(0.0f32, f32::max), 1.0);
    }
    assert_eq!(
        asn(&[
            "guidance",
            "--context",
            &f.path("context.pfm"),
            "--order",
            "3",
            "--out",
            &f.path("g.pfm")
        ])
        .status
        .code(),
        Some(1)
    );

    let o = asn(&["sample", "--context", &f.path("step.pfm"), "--ratio", "0.1"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "x,y,weight");
    assert_eq!(lines.len() - 1, (0.1f64 * 24.0 * 18.0).round() as usize);
    // Central differences put the full weight on the two columns beside the crease.
    for l in &lines[1..=36] {
        assert!(l.ends_with(",1"));
        assert!(l.starts_with("11,") || l.starts_with("12,"));
    }
}

#[test]
fn metrics_report_in_both_formats() {
    let f = Fixture::new();
    let o = asn(&[
        "metrics",
        "--pred-depth",
        &f.path("noisy.pfm"),
        "--gt-depth",
        &f.path("depth.pfm"),
        "--intrinsics",
        &f.path("k.json"),
        "--pred-normals",
        &f.path("normals.pfm"),
        "--gt-normals",
        &f.path("normals.pfm"),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(report["depth"]["rel"].as_f64().unwrap() > 0.0);
    assert!(report["pointcloud"]["dist"].as_f64().unwrap() > 0.0);
    assert!(report["normal"]["mean_deg"].as_f64().unwrap() < 1e-3);

    let o = asn(&[
        "metrics",
        "--format",
        "csv",
        "--pred-normals",
        &f.path("normals.pfm"),
        "--gt-normals",
        &f.path("normals.pfm"),
    ]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("section,metric,value\nnormal,"));
    assert_eq!(asn(&["metrics"]).status.code(), Some(1));
    assert_eq!(
        asn(&["metrics", "--pred-depth", &f.path("depth.pfm")])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn loss_terms() {
    let f = Fixture::new();
    let value = |args: &[&str]| -> f64 {
        let o = asn(args);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
        let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        v["value"].as_f64().unwrap()
    };
    let (d, n, k, c, noisy) = (
        f.path("depth.pfm"),
        f.path("normals.pfm"),
        f.path("k.json"),
        f.path("context.pfm"),
        f.path("noisy.pfm"),
    );
    assert_eq!(
        value(&[
            "loss",
            "--term",
            "silog",
            "--pred-depth",
            &d,
            "--gt-depth",
            &d
        ]),
        0.0
    );
    assert!(
        value(&[
            "loss",
            "--term",
            "silog",
            "--pred-depth",
            &noisy,
            "--gt-depth",
            &d
        ]) > 0.0
    );
    assert!(
        value(&[
            "loss",
            "--term",
            "asn",
            "--pred-depth",
            &d,
            "--gt-normals",
            &n,
            "--intrinsics",
            &k,
            "--context",
            &c
        ]) < 1e-6
    );
    assert!(
        value(&[
            "loss",
            "--term",
            "normal",
            "--pred-normals",
            &n,
            "--gt-normals",
            &n,
            "--context",
            &f.path("step.pfm")
        ])
        .abs()
            < 1e-12
    );
    assert!(
        value(&[
            "loss",
            "--term",
            "vn",
            "--pred-depth",
            &noisy,
            "--gt-depth",
            &d,
            "--intrinsics",
            &k
        ]) > 0.0
    );
    assert!(
        value(&[
            "loss",
            "--term",
            "total",
            "--pred-depth",
            &noisy,
            "--gt-depth",
            &d,
            "--pred-normals",
            &n,
            "--gt-normals",
            &n,
            "--intrinsics",
            &k,
            "--context",
            &c
        ]) > 0.0
    );
    let o = asn(&["loss", "--term", "asn", "--pred-depth", &d]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--gt-normals"));
}

#[test]
fn gradcheck_reports_per_instance() {
    for target in ["depth", "context"] {
        let o = asn(&[
            "gradcheck",
            "--target",
            target,
            "--instances",
            "2",
            "--size",
            "8",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let text = String::from_utf8(o.stdout).unwrap();
        assert!(text.starts_with("instance,seed,gradient,max_rel_error\n"));
        let rows = if target == "depth" { 6 } else { 2 };
        assert_eq!(text.lines().count(), rows + 1);
    }
    let o = asn(&[
        "gradcheck",
        "--target",
        "depth",
        "--instances",
        "1",
        "--size",
        "8",
        "--tol",
        "1e-300",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn experiments_write_csv() {
    let o = asn(&["experiment", "window"]);
    assert_eq!(String::from_utf8(o.stdout).unwrap(), "9\n");
    let dir = tempfile::tempdir().unwrap();
    let timing = dir.path().join("t.csv");
    let o = asn(&[
        "experiment",
        "patch",
        "--width",
        "32",
        "--height",
        "24",
        "--repeats",
        "1",
        "--timing",
        timing.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("patch,size,3,asn,"));
    assert!(std::fs::read_to_string(&timing)
        .unwrap()
        .starts_with("value,method,time_ms\n3,asn,"));
    let o = asn(&[
        "experiment",
        "noise",
        "--width",
        "24",
        "--height",
        "24",
        "--seeds",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn thread_count_comes_from_the_environment() {
    let f = Fixture::new();
    let run = |threads: &str, out: &str| {
        Command::new(env!("CARGO_BIN_EXE_asn"))
            .env("ASN_THREADS", threads)
            .args([
                "normals",
                "--method",
                "asn",
                "--depth",
                &f.path("noisy.pfm"),
                "--intrinsics",
                &f.path("k.json"),
                "--context",
                &f.path("context.pfm"),
                "--out",
                &f.path(out),
            ])
            .output()
            .unwrap()
    };
    assert!(run("1", "a.pfm").status.success());
    assert!(run("0", "b.pfm").status.success());
    assert_eq!(
        std::fs::read(f.out("a.pfm")).unwrap(),
        std::fs::read(f.out("b.pfm")).unwrap()
    );
    assert_eq!(run("many", "c.pfm").status.code(), Some(1));
}
