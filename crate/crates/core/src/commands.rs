//! Batch commands behind the command-line interface.
//!
//! Each command returns a serializable summary; rendering to JSON or CSV and
//! choosing an exit status is left to the caller.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{astm_warning, OutputFormat, RunConfig};
use crate::error::{Error, Result};
use crate::eval::{self, CircleMode, EvalReport, MaskPair, RobustnessTable};
use crate::io::{self, ReadOptions};
use crate::jeffries::{self, JeffriesResult};
use crate::mask::Calibration;
use crate::overlay::{self, OverlayStyle};
use crate::prep;
use crate::stitch::{self, StitchSummary};
use crate::synth::{self, Degradation, SynthSpec};

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "tif", "tiff"];

fn is_image(p: &Path) -> bool {
    p.is_file()
        && p.extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Expands directories into their image files; results are sorted.
pub fn collect_images(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            for e in std::fs::read_dir(p).map_err(|e| Error::io(p, e))? {
                let path = e.map_err(|e| Error::io(p, e))?.path();
                if is_image(&path) {
                    out.push(path);
                }
            }
        } else if p.exists() {
            out.push(p.clone());
        } else {
            return Err(Error::io(
                p,
                std::io::Error::new(std::io::ErrorKind::NotFound, "input not found"),
            ));
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Runs `f` on a pool of `jobs` threads (all cores when `None`).
pub fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match jobs {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(e) => {
                log::warn!("falling back to the global pool: {e}");
                f()
            }
        },
        None => f(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub input: PathBuf,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepOutput {
    pub input: PathBuf,
    pub output: PathBuf,
    pub instances: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrepSummary {
    pub processed: Vec<PrepOutput>,
    pub failures: Vec<Failure>,
}

/// Converts edge masks into 16-bit label TIFFs named `<stem>.tif`.
pub fn cmd_prep(inputs: &[PathBuf], output_dir: &Path, cfg: &RunConfig) -> Result<PrepSummary> {
    cfg.prep.validate()?;
    let files = collect_images(inputs)?;
    std::fs::create_dir_all(output_dir).map_err(|e| Error::io(output_dir, e))?;
    let opts = ReadOptions {
        max_side: cfg.max_side,
    };
    let results: Vec<_> = with_pool(cfg.jobs, || {
        files
            .par_iter()
            .map(|f| {
                let out = output_dir.join(format!("{}.tif", stem(f)));
                let r = io::read_gray8_with(f, opts)
                    .and_then(|raw| prep::prepare_mask(&raw, &cfg.prep))
                    .and_then(|m| {
                        io::write_label_mask(&m, &out)?;
                        Ok(m.instance_count())
                    });
                (f.clone(), out, r)
            })
            .collect()
    });
    let mut summary = PrepSummary::default();
    for (input, output, r) in results {
        match r {
            Ok(instances) => summary.processed.push(PrepOutput {
                input,
                output,
                instances,
            }),
            Err(e) => summary.failures.push(Failure {
                input,
                error: e.to_string(),
            }),
        }
    }
    Ok(summary)
}

pub fn cmd_stitch(input_dir: &Path, output_dir: &Path, cfg: &RunConfig) -> Result<StitchSummary> {
    stitch::stitch_dataset(input_dir, &cfg.stitch, output_dir)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub spec: SynthSpec,
    pub calibration: Calibration,
    pub canvas_area_mm2: f64,
    pub true_density_per_mm2: f64,
    pub instances: usize,
    pub labels: PathBuf,
    pub edges: PathBuf,
    pub prediction: Option<PathBuf>,
    pub prediction_instances: Option<usize>,
}

/// Writes `<name>_labels.tif`, `<name>_edges.png`, optionally a degraded
/// `<name>_pred.tif`, and `<name>_manifest.json`.
pub fn cmd_synth(
    output_dir: &Path,
    name: &str,
    spec: &SynthSpec,
    cal: Calibration,
) -> Result<SynthManifest> {
    std::fs::create_dir_all(output_dir).map_err(|e| Error::io(output_dir, e))?;
    let field = synth::generate_voronoi(spec)?;
    let labels = output_dir.join(format!("{name}_labels.tif"));
    let edges = output_dir.join(format!("{name}_edges.png"));
    io::write_label_mask(&field.labels, &labels)?;
    io::write_image(
        &image::DynamicImage::ImageLuma8(field.edges.clone()),
        &edges,
        image::ImageFormat::Png,
    )?;
    let (prediction, prediction_instances) = match &spec.degradation {
        Some(d) => {
            let pred = synth::degrade(&field.labels, d)?;
            let p = output_dir.join(format!("{name}_pred.tif"));
            io::write_label_mask(&pred, &p)?;
            (Some(p), Some(pred.instance_count()))
        }
        None => (None, None),
    };
    let manifest = SynthManifest {
        spec: spec.clone(),
        calibration: cal,
        canvas_area_mm2: cal.pixel_area_to_mm2(f64::from(spec.width) * f64::from(spec.height)),
        true_density_per_mm2: spec.true_density(cal),
        instances: field.labels.instance_count(),
        labels,
        edges,
        prediction,
        prediction_instances,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Serialize(e.to_string()))?;
    io::write_text(output_dir.join(format!("{name}_manifest.json")), &json)?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeRecord {
    pub image: String,
    pub result: Option<JeffriesResult>,
    pub astm_warning: Option<String>,
    pub overlay: Option<PathBuf>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub records: Vec<AnalyzeRecord>,
}

impl AnalyzeReport {
    pub fn failed(&self) -> usize {
        self.records.iter().filter(|r| r.error.is_some()).count()
    }
}

/// Jeffries measurement of each label mask with a self-inscribed circle.
///
/// With `overlay_dir`, writes `<stem>_overlay.png`; a grayscale micrograph
/// named `<stem>.*` in `micrograph_dir` is used as the overlay base.
pub fn cmd_analyze(
    inputs: &[PathBuf],
    cfg: &RunConfig,
    overlay_dir: Option<&Path>,
    micrograph_dir: Option<&Path>,
) -> Result<AnalyzeReport> {
    let files = collect_images(inputs)?;
    if let Some(d) = overlay_dir {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let micrographs: BTreeMap<String, PathBuf> = match micrograph_dir {
        Some(d) => collect_images(&[d.to_path_buf()])?
            .into_iter()
            .map(|p| (stem(&p), p))
            .collect(),
        None => BTreeMap::new(),
    };
    let warning = cfg.astm_warning();
    if let Some(w) = &warning {
        log::warn!("target grains {w}");
    }
    let opts = ReadOptions {
        max_side: cfg.max_side,
    };
    let records = with_pool(cfg.jobs, || {
        files
            .par_iter()
            .map(|f| {
                let name = stem(f);
                let run = || -> Result<(JeffriesResult, Option<PathBuf>)> {
                    let mask = io::read_label_mask_with(f, opts)?;
                    let res = jeffries::analyze(&mask, cfg.calibration, cfg.target_grains, None)?;
                    let overlay = match overlay_dir {
                        Some(d) => {
                            let micro = micrographs
                                .get(&name)
                                .map(|p| io::read_gray8_with(p, opts))
                                .transpose()?;
                            let ext = jeffries::radial_extents(&mask, res.circle.center);
                            let cls = jeffries::classify(&ext, res.circle.radius);
                            let out = d.join(format!("{name}_overlay.png"));
                            overlay::render_overlay(
                                micro.as_ref(),
                                &mask,
                                &res.circle,
                                &cls,
                                &OverlayStyle::default(),
                                &out,
                            )?;
                            Some(out)
                        }
                        None => None,
                    };
                    Ok((res, overlay))
                };
                match run() {
                    Ok((res, overlay)) => AnalyzeRecord {
                        image: name,
                        result: Some(res),
                        astm_warning: warning.clone(),
                        overlay,
                        error: None,
                    },
                    Err(e) => AnalyzeRecord {
                        image: name,
                        result: None,
                        astm_warning: warning.clone(),
                        overlay: None,
                        error: Some(e.to_string()),
                    },
                }
            })
            .collect::<Vec<_>>()
    });
    let mut report = AnalyzeReport { records };
    report.records.sort_by(|a, b| a.image.cmp(&b.image));
    Ok(report)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairedInputs {
    pub pairs: Vec<(String, PathBuf, PathBuf)>,
    /// Ground-truth files with no prediction, and vice versa.
    pub unmatched: Vec<PathBuf>,
}

/// Matches files in two directories by file stem.
pub fn pair_directories(gt_dir: &Path, pred_dir: &Path) -> Result<PairedInputs> {
    let index = |d: &Path| -> Result<BTreeMap<String, PathBuf>> {
        Ok(collect_images(&[d.to_path_buf()])?
            .into_iter()
            .map(|p| (stem(&p), p))
            .collect())
    };
    let gt = index(gt_dir)?;
    let mut pred = index(pred_dir)?;
    let mut out = PairedInputs::default();
    for (name, g) in gt {
        match pred.remove(&name) {
            Some(p) => out.pairs.push((name, g, p)),
            None => {
                log::warn!("no prediction for {}", g.display());
                out.unmatched.push(g);
            }
        }
    }
    for (_, p) in pred {
        log::warn!("no ground truth for {}", p.display());
        out.unmatched.push(p);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct LoadedPairs {
    pub unmatched: Vec<PathBuf>,
    pub failures: Vec<Failure>,
    pub pairs: Vec<MaskPair>,
}

pub fn load_pairs(gt_dir: &Path, pred_dir: &Path, cfg: &RunConfig) -> Result<LoadedPairs> {
    let paired = pair_directories(gt_dir, pred_dir)?;
    let opts = ReadOptions {
        max_side: cfg.max_side,
    };
    let loaded: Vec<_> = with_pool(cfg.jobs, || {
        paired
            .pairs
            .par_iter()
            .map(|(name, g, p)| {
                let r = io::read_label_mask_with(g, opts).and_then(|gt| {
                    Ok(MaskPair {
                        name: name.clone(),
                        gt,
                        pred: io::read_label_mask_with(p, opts)?,
                    })
                });
                (g.clone(), r)
            })
            .collect()
    });
    let mut out = LoadedPairs {
        unmatched: paired.unmatched,
        failures: Vec::new(),
        pairs: Vec::new(),
    };
    for (g, r) in loaded {
        match r {
            Ok(p) => out.pairs.push(p),
            Err(e) => out.failures.push(Failure {
                input: g,
                error: e.to_string(),
            }),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateOutput {
    pub report: EvalReport,
    pub unmatched: Vec<PathBuf>,
    pub load_failures: Vec<Failure>,
}

pub fn cmd_evaluate(gt_dir: &Path, pred_dir: &Path, cfg: &RunConfig) -> Result<EvaluateOutput> {
    let loaded = load_pairs(gt_dir, pred_dir, cfg)?;
    let report = with_pool(cfg.jobs, || {
        eval::evaluate_dataset(
            &loaded.pairs,
            cfg.calibration,
            cfg.target_grains,
            cfg.circle_mode,
            &cfg.eval,
        )
    });
    Ok(EvaluateOutput {
        report,
        unmatched: loaded.unmatched,
        load_failures: loaded.failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessOutput {
    pub table: RobustnessTable,
    pub unmatched: Vec<PathBuf>,
    pub load_failures: Vec<Failure>,
}

/// Sweeps every configured target under both circle modes.
pub fn cmd_robustness(gt_dir: &Path, pred_dir: &Path, cfg: &RunConfig) -> Result<RobustnessOutput> {
    let loaded = load_pairs(gt_dir, pred_dir, cfg)?;
    let table = with_pool(cfg.jobs, || {
        eval::robustness_sweep(
            &loaded.pairs,
            cfg.calibration,
            &cfg.robustness_targets,
            &CircleMode::ALL,
        )
    });
    Ok(RobustnessOutput {
        table,
        unmatched: loaded.unmatched,
        load_failures: loaded.failures,
    })
}

/// Flat CSV rows for each command's report.
pub mod csv_rows {
    use super::*;

    #[derive(Debug, Serialize)]
    pub struct AnalyzeRow<'a> {
        pub image: &'a str,
        pub n_inside: Option<usize>,
        pub n_intercepted: Option<usize>,
        pub f: Option<f64>,
        pub n_a: Option<f64>,
        pub g: Option<f64>,
        pub center_x: Option<f64>,
        pub center_y: Option<f64>,
        pub radius: Option<f64>,
        pub area_mm2: Option<f64>,
        pub astm_warning: Option<&'a str>,
        pub error: Option<&'a str>,
    }

    impl<'a> From<&'a AnalyzeRecord> for AnalyzeRow<'a> {
        fn from(r: &'a AnalyzeRecord) -> Self {
            let res = r.result.as_ref();
            Self {
                image: &r.image,
                n_inside: res.map(|j| j.n_inside),
                n_intercepted: res.map(|j| j.n_intercepted),
                f: res.map(|j| j.f),
                n_a: res.map(|j| j.n_a),
                g: res.and_then(|j| j.g),
                center_x: res.map(|j| j.circle.center.x),
                center_y: res.map(|j| j.circle.center.y),
                radius: res.map(|j| j.circle.radius),
                area_mm2: res.map(|j| j.circle.physical_area_mm2),
                astm_warning: r.astm_warning.as_deref(),
                error: r.error.as_deref(),
            }
        }
    }

    #[derive(Debug, Serialize)]
    pub struct EvalRow<'a> {
        pub image: &'a str,
        pub mode: &'static str,
        pub target: usize,
        pub ap50: f64,
        pub map_50_95: f64,
        pub boundary_f1: f64,
        pub count_error: i64,
        pub gt_n_inside: usize,
        pub gt_n_intercepted: usize,
        pub gt_n_a: f64,
        pub gt_g: Option<f64>,
        pub pred_n_inside: usize,
        pub pred_n_intercepted: usize,
        pub pred_n_a: f64,
        pub pred_g: Option<f64>,
        pub n_inside_mape: Option<f64>,
        pub n_intercepted_mape: Option<f64>,
        pub n_a_mape: Option<f64>,
        pub g_mape: Option<f64>,
    }

    impl<'a> From<&'a eval::PairRecord> for EvalRow<'a> {
        fn from(r: &'a eval::PairRecord) -> Self {
            Self {
                image: &r.image,
                mode: r.mode.as_str(),
                target: r.target,
                ap50: r.ap50,
                map_50_95: r.map_50_95,
                boundary_f1: r.boundary_f1,
                count_error: r.count_error,
                gt_n_inside: r.gt.n_inside,
                gt_n_intercepted: r.gt.n_intercepted,
                gt_n_a: r.gt.n_a,
                gt_g: r.gt.g,
                pred_n_inside: r.pred.n_inside,
                pred_n_intercepted: r.pred.n_intercepted,
                pred_n_a: r.pred.n_a,
                pred_g: r.pred.g,
                n_inside_mape: r.errors.n_inside_mape,
                n_intercepted_mape: r.errors.n_intercepted_mape,
                n_a_mape: r.errors.n_a_mape,
                g_mape: r.errors.g_mape,
            }
        }
    }

    #[derive(Debug, Serialize)]
    pub struct RobustnessRow {
        pub target: usize,
        pub mode: &'static str,
        pub images: usize,
        pub gt_count: f64,
        pub gt_n_a: f64,
        pub gt_g: Option<f64>,
        pub pred_count: f64,
        pub pred_n_a: f64,
        pub n_a_mape: Option<f64>,
        pub pred_g: Option<f64>,
        pub g_mape: Option<f64>,
        pub failures: usize,
    }

    impl From<&eval::RobustnessRow> for RobustnessRow {
        fn from(r: &eval::RobustnessRow) -> Self {
            Self {
                target: r.target,
                mode: r.mode.as_str(),
                images: r.images,
                gt_count: r.gt_count,
                gt_n_a: r.gt_n_a,
                gt_g: r.gt_g,
                pred_count: r.pred_count,
                pred_n_a: r.pred_n_a,
                n_a_mape: r.n_a_mape,
                pred_g: r.pred_g,
                g_mape: r.g_mape,
                failures: r.failures.len(),
            }
        }
    }
}

fn to_csv<R: Serialize>(rows: impl IntoIterator<Item = R>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Serialize(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Serialize(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serialize(e.to_string()))
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::Serialize(e.to_string()))
}

pub fn render_analyze(report: &AnalyzeReport, format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::Json => to_json(report),
        OutputFormat::Csv => to_csv(report.records.iter().map(csv_rows::AnalyzeRow::from)),
    }
}

pub fn render_evaluate(out: &EvaluateOutput, format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::Json => to_json(out),
        OutputFormat::Csv => to_csv(out.report.records.iter().map(csv_rows::EvalRow::from)),
    }
}

pub fn render_robustness(out: &RobustnessOutput, format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::Json => to_json(out),
        OutputFormat::Csv => to_csv(out.table.rows.iter().map(csv_rows::RobustnessRow::from)),
    }
}

pub fn render_json<T: Serialize>(v: &T) -> Result<String> {
    to_json(v)
}

/// Convenience for callers that only want the degraded copy of a mask file.
pub fn degrade_file(input: &Path, output: &Path, d: &Degradation) -> Result<usize> {
    let m = io::read_label_mask(input)?;
    let out = synth::degrade(&m, d)?;
    io::write_label_mask(&out, output)?;
    Ok(out.instance_count())
}

/// Warning text for a target, exposed for report consumers.
pub fn target_warning(target: usize) -> Option<String> {
    astm_warning(target)
}
