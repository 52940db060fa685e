use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ellfit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ellfit")).args(args).output().expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write_points(path: &Path, pts: impl Iterator<Item = (f64, f64)>) {
    let mut s = String::from("x,y\n");
    for (x, y) in pts {
        s.push_str(&format!("{x},{y}\n"));
    }
    std::fs::write(path, s).unwrap();
}

fn circle(n: usize, cx: f64, cy: f64, r: f64) -> impl Iterator<Item = (f64, f64)> {
    (0..n).map(move |i| {
        let t = std::f64::consts::TAU * i as f64 / n as f64;
        (cx + r * t.cos(), cy + r * t.sin())
    })
}

#[test]
fn fit_single_clean_circle() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("c.csv");
    let out = dir.path().join("r.json");
    write_points(&input, circle(100, 12.0, -3.0, 20.0));
    let o = ellfit(&["fit-single", "--input", input.to_str().unwrap(), "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&out);
    assert_eq!(r["failed"], false);
    let g = &r["geometry"];
    for (key, want) in [("g", 12.0), ("h", -3.0), ("a", 20.0), ("b", 20.0)] {
        assert!((g[key].as_f64().unwrap() - want).abs() < 1e-4 * want.abs().max(1.0), "{key}: {g}");
    }
    let c = &r["conic"];
    assert!((c["A"].as_f64().unwrap() + c["C"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert!(g.get("theta_deg").is_some());
    assert_eq!(r["schema_version"], 1);
}

#[test]
fn too_few_points_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("five.csv");
    write_points(&input, circle(5, 0.0, 0.0, 3.0));
    let o = ellfit(&["fit-single", "--input", input.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("need ≥ 6 points"));
}

#[test]
fn text_row_is_reported_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    std::fs::write(&input, "x,y\n1,2\n3,4\nfive,6\n").unwrap();
    let o = ellfit(&["fit-single", "--input", input.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 4") && err.contains("five"), "{err}");
}

#[test]
fn generate_is_deterministic_and_checks_range() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let o = ellfit(&[
            "generate",
            "--scenario",
            "cluster",
            "--outliers",
            "0.3",
            "--seed",
            "7",
            "--output",
            p.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let side_a = std::fs::read(dir.path().join("a.truth.json")).unwrap();
    let side_b = std::fs::read(dir.path().join("b.truth.json")).unwrap();
    assert_eq!(side_a, side_b);
    let side = json(&dir.path().join("a.truth.json"));
    assert_eq!(side["seed"], 7);
    assert_eq!(side["outlier_mask"].as_array().unwrap().iter().filter(|v| v.as_bool() == Some(true)).count(), 30);

    let o = ellfit(&[
        "generate",
        "--scenario",
        "cluster",
        "--outliers",
        "0.6",
        "--seed",
        "7",
        "--output",
        a.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = ellfit(&["generate", "--scenario", "spiral", "--output", a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("one_sided_inside"));
}

#[test]
fn missing_seed_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.csv");
    let o = ellfit(&["generate", "--scenario", "uniform_zero_mean", "--output", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(json(&dir.path().join("s.truth.json"))["seed"].is_u64());
}

#[test]
fn coupled_with_and_without_labels() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("pair.csv");
    let o = ellfit(&["generate", "--scenario", "coupled_uniform", "--seed", "3", "--output", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&p).unwrap();
    assert!(text.starts_with("x,y,label\n"));
    assert_eq!(text.lines().count(), 201);

    let out = dir.path().join("r.json");
    let o = ellfit(&["fit-coupled", "--input", p.to_str().unwrap(), "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&out);
    assert!(r["association"]["accuracy"].as_f64().unwrap() > 0.9, "{}", r["association"]);
    let mu = r["mu"].as_f64().unwrap();
    assert!(mu > 0.0 && mu < 1.0);
    assert_eq!(r["outer"]["g"], r["inner"]["g"]);

    let unlabeled = dir.path().join("plain.csv");
    let stripped: String = text.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string() + "\n").collect();
    std::fs::write(&unlabeled, stripped).unwrap();
    let o = ellfit(&["fit-coupled", "--input", unlabeled.to_str().unwrap(), "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(json(&out)["association"].get("accuracy").is_none());
}

#[test]
fn coupled_on_single_ellipse_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("one.csv");
    let out = dir.path().join("r.json");
    write_points(&p, circle(80, 5.0, 5.0, 30.0).map(|(x, y)| (5.0 + 1.5 * (x - 5.0), y)));
    let o = ellfit(&["fit-coupled", "--input", p.to_str().unwrap(), "--output", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&out);
    assert_eq!(r["failed"], true);
    assert!(r["reason"].as_str().unwrap().contains("eta"), "{}", r["reason"]);
}

#[test]
fn bench_writes_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bench.json");
    std::fs::write(
        &cfg,
        r#"{"scenarios": ["uniform_zero_mean"], "outlier_fractions": [0.0, 0.2], "ellipses": 2, "runs": 2, "master_seed": 11}"#,
    )
    .unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = ellfit(&["bench", "--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stdout).contains("uniform_zero_mean"));
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["report.json", "runs.csv", "summary.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let summary = std::fs::read_to_string(a.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);

    std::fs::write(&cfg, r#"{"scenarios": [], "master_seed": 1}"#).unwrap();
    let o = ellfit(&["bench", "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().join("c").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}
