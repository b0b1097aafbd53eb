//! Command-line behavior: summaries, exit codes and config round trips.

mod common;

use std::path::Path;

use grainsize::cli::{self, EXIT_OK, EXIT_PARTIAL, EXIT_USAGE};
use grainsize::io;
use grainsize::synth::{self, Degradation};
use grainsize::LabelMask;
use image::{GrayImage, Luma};
use serde_json::Value;

fn run(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let code = cli::run(std::iter::once("grainsize").chain(args.iter().copied()), &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn json(s: &str) -> Value {
    serde_json::from_str(s).unwrap_or_else(|e| panic!("not JSON ({e}): {s}"))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Edge mask: 255 grid lines every 20 px, 0 interiors.
fn edge_mask() -> GrayImage {
    GrayImage::from_fn(100, 100, |x, y| {
        Luma([if x % 20 == 0 || y % 20 == 0 { 255 } else { 0 }])
    })
}

#[test]
fn prep_converts_each_file() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("gt_raw");
    std::fs::create_dir(&raw).unwrap();
    for k in 0..3 {
        edge_mask().save(raw.join(format!("m{k}.png"))).unwrap();
    }
    let out = dir.path().join("gt_labels");
    let (code, text) = run(&["prep", "--input", p(&raw), "--output", p(&out)]);
    assert_eq!(code, EXIT_OK);
    let v = json(&text);
    assert_eq!(v["processed"].as_array().unwrap().len(), 3);
    assert!(v["failures"].as_array().unwrap().is_empty());
    for k in 0..3 {
        let m = io::read_label_mask(out.join(format!("m{k}.tif"))).unwrap();
        // 5×5 interiors of 19×19 erode to 17×17 = 289 ≥ 200.
        assert_eq!(m.instance_count(), 25);
    }
}

#[test]
fn prep_reports_unreadable_file() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("a.png");
    edge_mask().save(&good).unwrap();
    let bad = dir.path().join("b.png");
    std::fs::write(&bad, b"not an image").unwrap();
    let (code, text) = run(&["prep", "--input", p(&good), p(&bad), "--output", p(&dir.path().join("o"))]);
    assert_eq!(code, EXIT_PARTIAL);
    assert_eq!(json(&text)["failures"].as_array().unwrap().len(), 1);
}

#[test]
fn stitch_empty_directory() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = run(&["stitch", "--input", p(dir.path()), "--output", p(&dir.path().join("out"))]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(json(&text)["groups"], 0);
}

#[test]
fn stitch_grid_from_flags() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    std::fs::create_dir(&input).unwrap();
    for r in 0..2u32 {
        for c in 0..2u32 {
            let img = GrayImage::from_pixel(5, 4, Luma([(r * 2 + c) as u8 * 50]));
            img.save(input.join(format!("s1_r{r}_c{c}.png"))).unwrap();
        }
    }
    let out = dir.path().join("out");
    let (code, text) = run(&["stitch", "--input", p(&input), "--output", p(&out), "--rows", "2", "--cols", "2"]);
    assert_eq!(code, EXIT_OK, "{text}");
    assert_eq!(json(&text)["groups"], 1);
    let img = io::read_gray8(out.join("s1.png")).unwrap();
    assert_eq!(img.dimensions(), (10, 8));
    assert_eq!(img.get_pixel(9, 7).0[0], 150);
}

#[test]
fn synth_writes_pair_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = run(&["synth", "--seeds", "500", "--size", "2048", "--output", p(dir.path())]);
    assert_eq!(code, EXIT_OK);
    let v = json(&text);
    assert_eq!(v["instances"], 500);
    let labels = io::read_label_mask(dir.path().join("synth_labels.tif")).unwrap();
    assert_eq!(labels.dimensions(), (2048, 2048));
    assert!(dir.path().join("synth_edges.png").exists());
    let manifest = json(&std::fs::read_to_string(dir.path().join("synth_manifest.json")).unwrap());
    let density = manifest["true_density_per_mm2"].as_f64().unwrap();
    // 500 seeds over (2048 / 2.26 µm)² = 0.8212 mm².
    assert!((density - 500.0 / (2048.0f64 / 2.26 / 1000.0).powi(2)).abs() < 1e-6);
    assert_eq!(manifest["spec"]["n_seeds"], 500);
}

fn synthetic_dir(dir: &Path, names: &[&str], merge: f64) -> (std::path::PathBuf, std::path::PathBuf) {
    let gt = dir.join("gt");
    let pred = dir.join("pred");
    std::fs::create_dir_all(&gt).unwrap();
    std::fs::create_dir_all(&pred).unwrap();
    for (k, n) in names.iter().enumerate() {
        let m = common::voronoi(512, 512, 800, 0, 40 + k as u64);
        io::write_label_mask(&m, gt.join(format!("{n}.tif"))).unwrap();
        let d = synth::degrade(&m, &Degradation::merges(merge, k as u64)).unwrap();
        io::write_label_mask(&d, pred.join(format!("{n}.tif"))).unwrap();
    }
    (gt, pred)
}

#[test]
fn analyze_synthetic_mask() {
    let dir = tempfile::tempdir().unwrap();
    let (gt, _) = synthetic_dir(dir.path(), &["a"], 0.0);
    let (code, text) = run(&["analyze", p(&gt.join("a.tif"))]);
    assert_eq!(code, EXIT_OK);
    let rec = &json(&text)["records"][0];
    assert!(rec["result"]["n_inside"].as_u64().unwrap() >= 60);
    assert!(rec["result"]["g"].as_f64().unwrap().is_finite());
    assert!(rec["astm_warning"].is_null());
}

#[test]
fn analyze_low_target_warns() {
    let dir = tempfile::tempdir().unwrap();
    let (gt, _) = synthetic_dir(dir.path(), &["a"], 0.0);
    let (code, text) = run(&["analyze", "--target", "10", p(&gt)]);
    assert_eq!(code, EXIT_OK);
    let w = json(&text)["records"][0]["astm_warning"].as_str().unwrap().to_string();
    assert!(w.starts_with("below 50-grain minimum"), "{w}");
}

#[test]
fn analyze_unreachable_target_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let few = common::voronoi(200, 200, 5, 0, 1);
    let path = dir.path().join("few.tif");
    io::write_label_mask(&few, &path).unwrap();
    let (code, text) = run(&["analyze", p(&path)]);
    assert_eq!(code, EXIT_PARTIAL, "every input failed");
    let rec = &json(&text)["records"][0];
    assert!(rec["result"].is_null());
    assert!(rec["error"].as_str().unwrap().contains("60"));

    // One success among failures is not a failed run.
    let (gt, _) = synthetic_dir(dir.path(), &["ok"], 0.0);
    let (code, _) = run(&["analyze", p(&path), p(&gt)]);
    assert_eq!(code, EXIT_OK);
}

#[test]
fn analyze_writes_overlays_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (gt, _) = synthetic_dir(dir.path(), &["a", "b"], 0.0);
    let overlays = dir.path().join("ov");
    let (code, text) = run(&["analyze", "--format", "csv", "--overlay-dir", p(&overlays), p(&gt)]);
    assert_eq!(code, EXIT_OK);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("image,n_inside,n_intercepted"));
    assert!(lines[1].starts_with("a,") && lines[2].starts_with("b,"));
    assert!(overlays.join("a_overlay.png").exists());
    assert!(overlays.join("b_overlay.png").exists());
}

#[test]
fn evaluate_identical_dirs() {
    let dir = tempfile::tempdir().unwrap();
    let (gt, _) = synthetic_dir(dir.path(), &["a", "b"], 0.0);
    let (code, text) = run(&["evaluate", "--gt", p(&gt), "--pred", p(&gt)]);
    assert_eq!(code, EXIT_OK);
    let agg = &json(&text)["report"]["aggregate"];
    assert_eq!(agg["ap50"], 1.0);
    assert_eq!(agg["map_50_95"], 1.0);
    assert_eq!(agg["boundary_f1"], 1.0);
    assert_eq!(agg["n_a_mape"], 0.0);
    assert_eq!(agg["g_mape"], 0.0);
}

#[test]
fn evaluate_skips_unmatched() {
    let dir = tempfile::tempdir().unwrap();
    let (gt, pred) = synthetic_dir(dir.path(), &["a", "b", "c"], 0.1);
    std::fs::remove_file(pred.join("b.tif")).unwrap();
    let report = dir.path().join("report.json");
    let (code, text) = run(&["evaluate", "--gt", p(&gt), "--pred", p(&pred), "--report", p(&report)]);
    assert_eq!(code, EXIT_OK);
    let v = json(&text);
    let images: Vec<&str> = v["report"]["records"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["image"].as_str().unwrap())
        .collect();
    assert_eq!(images, ["a", "c"]);
    assert_eq!(v["unmatched"].as_array().unwrap().len(), 1);
    assert!(v["report"]["aggregate"]["count_error"].as_f64().unwrap() < 0.0);
    assert_eq!(json(&std::fs::read_to_string(report).unwrap()), v);
}

#[test]
fn evaluate_dimension_mismatch_is_partial() {
    let dir = tempfile::tempdir().unwrap();
    let (gt, pred) = synthetic_dir(dir.path(), &["a", "b"], 0.0);
    io::write_label_mask(&LabelMask::zeros(10, 10), pred.join("b.tif")).unwrap();
    let (code, text) = run(&["evaluate", "--gt", p(&gt), "--pred", p(&pred)]);
    assert_eq!(code, EXIT_PARTIAL);
    assert_eq!(json(&text)["report"]["failures"][0]["image"], "b");
}

#[test]
fn robustness_table_shape() {
    let dir = tempfile::tempdir().unwrap();
    let (gt, pred) = synthetic_dir(dir.path(), &["a", "b"], 0.1);
    let (code, text) = run(&["robustness", "--gt", p(&gt), "--pred", p(&pred)]);
    assert_eq!(code, EXIT_OK);
    let rows = json(&text)["table"]["rows"].as_array().unwrap().clone();
    assert_eq!(rows.len(), 20);
    let (code, csv) = run(&["robustness", "--format", "csv", "--targets", "10,50", "--gt", p(&gt), "--pred", p(&pred)]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(csv.lines().count(), 1 + 4);
}

#[test]
fn invalid_invocations() {
    assert_eq!(run(&[]).0, EXIT_USAGE);
    assert_eq!(run(&["frobnicate"]).0, EXIT_USAGE);
    assert_eq!(run(&["analyze", "--target", "0", "x.tif"]).0, EXIT_USAGE);
    assert_eq!(run(&["analyze", "--calibration", "-2", "x.tif"]).0, EXIT_USAGE);
    assert_eq!(run(&["evaluate", "--mode", "sideways", "--gt", "a", "--pred", "b"]).0, EXIT_USAGE);
    assert_eq!(run(&["--config", "/nonexistent/cfg.json", "analyze", "x.tif"]).0, EXIT_USAGE);
    assert_eq!(run(&["--help"]).0, EXIT_OK);
}

#[test]
fn dumped_config_reproduces_run() {
    let dir = tempfile::tempdir().unwrap();
    let (gt, pred) = synthetic_dir(dir.path(), &["a"], 0.1);
    let (code, cfg) = run(&["--dump-config", "--target", "40", "--mode", "gt-free", "--calibration", "1.5"]);
    assert_eq!(code, EXIT_OK);
    let cfg_path = dir.path().join("cfg.json");
    std::fs::write(&cfg_path, &cfg).unwrap();

    let direct = run(&["evaluate", "--target", "40", "--mode", "gt-free", "--calibration", "1.5", "--gt", p(&gt), "--pred", p(&pred)]);
    let via_file = run(&["--config", p(&cfg_path), "evaluate", "--gt", p(&gt), "--pred", p(&pred)]);
    assert_eq!(direct, via_file);
    assert_eq!(json(&direct.1)["report"]["mode"], "gt-free");
    // Flags still override the file.
    let (_, t) = run(&["--config", p(&cfg_path), "--target", "30", "evaluate", "--gt", p(&gt), "--pred", p(&pred)]);
    assert_eq!(json(&t)["report"]["target"], 30);
}

#[test]
fn binary_runs() {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_grainsize"))
        .args(["--dump-config"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(json(std::str::from_utf8(&out.stdout).unwrap())["target_grains"], 60);
    let bad = std::process::Command::new(env!("CARGO_BIN_EXE_grainsize"))
        .arg("nope")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(EXIT_USAGE));
}
