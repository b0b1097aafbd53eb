//! Benchmarking predicted masks against ground truth.
//!
//! Instance accuracy uses `AP(τ) = TP / (TP + FP + FN)` (the Cellpose-style
//! definition, not a precision/recall curve integral) with one-to-one IoU
//! matching; `mAP` averages τ over 0.50..=0.95 in steps of 0.05. Boundary F1
//! compares foreground boundary pixels within a Euclidean pixel tolerance.
//! Metallurgical agreement is scored with absolute percentage errors of the
//! Jeffries fields.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jeffries::{self, JeffriesResult, Point};
use crate::mask::{Calibration, LabelMask};

/// `[0.50, 0.55, …, 0.95]`
pub fn default_iou_thresholds() -> Vec<f64> {
    (0..10).map(|i| f64::from(50 + 5 * i) / 100.0).collect()
}

pub const DEFAULT_BOUNDARY_TOLERANCE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IouEntry {
    pub gt_id: u16,
    pub pred_id: u16,
    pub intersection: u64,
    pub iou: f64,
}

/// Pairwise IoU of overlapping instances; non-overlapping pairs are implicit zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IouMatrix {
    pub gt_count: usize,
    pub pred_count: usize,
    /// Sorted by `(gt_id, pred_id)`.
    pub entries: Vec<IouEntry>,
}

impl IouMatrix {
    pub fn get(&self, gt_id: u16, pred_id: u16) -> f64 {
        self.entries
            .binary_search_by(|e| (e.gt_id, e.pred_id).cmp(&(gt_id, pred_id)))
            .map(|i| self.entries[i].iou)
            .unwrap_or(0.0)
    }
}

fn same_dims(a: &LabelMask, b: &LabelMask) -> Result<()> {
    if a.dimensions() == b.dimensions() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            left: a.dimensions(),
            right: b.dimensions(),
        })
    }
}

fn areas(mask: &LabelMask) -> Vec<u64> {
    let mut a = vec![0u64; usize::from(mask.max_id()) + 1];
    for &l in mask.labels() {
        a[usize::from(l)] += 1;
    }
    a
}

pub fn instance_iou_matrix(gt: &LabelMask, pred: &LabelMask) -> Result<IouMatrix> {
    same_dims(gt, pred)?;
    let ga = areas(gt);
    let pa = areas(pred);
    let mut inter: HashMap<(u16, u16), u64> = HashMap::new();
    for (&g, &p) in gt.labels().iter().zip(pred.labels()) {
        if g != 0 && p != 0 {
            *inter.entry((g, p)).or_default() += 1;
        }
    }
    let mut entries: Vec<IouEntry> = inter
        .into_iter()
        .map(|((g, p), i)| {
            let union = ga[usize::from(g)] + pa[usize::from(p)] - i;
            IouEntry {
                gt_id: g,
                pred_id: p,
                intersection: i,
                iou: i as f64 / union as f64,
            }
        })
        .collect();
    entries.sort_unstable_by_key(|e| (e.gt_id, e.pred_id));
    Ok(IouMatrix {
        gt_count: ga.iter().skip(1).filter(|&&a| a > 0).count(),
        pred_count: pa.iter().skip(1).filter(|&&a| a > 0).count(),
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub matches: Vec<IouEntry>,
}

/// Greedy one-to-one matching by descending IoU among pairs with `iou ≥ τ`.
///
/// For `τ ≥ 0.5` every instance has at most one candidate partner except in
/// degenerate half-overlap stars, so greedy reaches maximum cardinality.
pub fn match_instances(iou: &IouMatrix, threshold: f64) -> MatchResult {
    let mut cands: Vec<&IouEntry> = iou.entries.iter().filter(|e| e.iou >= threshold).collect();
    cands.sort_by(|a, b| {
        b.iou
            .total_cmp(&a.iou)
            .then(a.gt_id.cmp(&b.gt_id))
            .then(a.pred_id.cmp(&b.pred_id))
    });
    let mut gt_used = std::collections::HashSet::new();
    let mut pred_used = std::collections::HashSet::new();
    let mut matches = Vec::new();
    for e in cands {
        if !gt_used.contains(&e.gt_id) && !pred_used.contains(&e.pred_id) {
            gt_used.insert(e.gt_id);
            pred_used.insert(e.pred_id);
            matches.push(*e);
        }
    }
    matches.sort_unstable_by_key(|e| (e.gt_id, e.pred_id));
    let tp = matches.len();
    MatchResult {
        threshold,
        tp,
        fp: iou.pred_count - tp,
        fn_: iou.gt_count - tp,
        matches,
    }
}

/// `TP / (TP + FP + FN)`; an empty ground truth with an empty prediction scores 1.
pub fn average_precision(m: &MatchResult) -> f64 {
    let denom = m.tp + m.fp + m.fn_;
    if denom == 0 {
        1.0
    } else {
        m.tp as f64 / denom as f64
    }
}

pub fn mean_average_precision(iou: &IouMatrix, thresholds: &[f64]) -> f64 {
    if thresholds.is_empty() {
        return f64::NAN;
    }
    thresholds
        .iter()
        .map(|&t| average_precision(&match_instances(iou, t)))
        .sum::<f64>()
        / thresholds.len() as f64
}

/// Foreground pixels with a 4-neighbor of a different label (background included).
pub fn boundary_pixels(mask: &LabelMask) -> Vec<bool> {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let l = mask.labels();
    let mut out = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let id = l[i];
            if id == 0 {
                continue;
            }
            out[i] = (x > 0 && l[i - 1] != id)
                || (x + 1 < w && l[i + 1] != id)
                || (y > 0 && l[i - w] != id)
                || (y + 1 < h && l[i + w] != id);
        }
    }
    out
}

/// Exact squared Euclidean distance to the nearest set pixel
/// (separable lower-envelope transform). Empty sets give `f64::INFINITY`.
pub fn squared_distance_transform(set: &[bool], width: usize, height: usize) -> Vec<f64> {
    let mut grid: Vec<f64> = set
        .iter()
        .map(|&b| if b { 0.0 } else { f64::INFINITY })
        .collect();
    let mut buf = vec![0.0; width.max(height)];
    let mut out = vec![0.0; width.max(height)];
    for x in 0..width {
        for y in 0..height {
            buf[y] = grid[y * width + x];
        }
        edt_1d(&buf[..height], &mut out[..height]);
        for y in 0..height {
            grid[y * width + x] = out[y];
        }
    }
    for y in 0..height {
        let row = &mut grid[y * width..(y + 1) * width];
        buf[..width].copy_from_slice(row);
        edt_1d(&buf[..width], &mut out[..width]);
        row.copy_from_slice(&out[..width]);
    }
    grid
}

fn edt_1d(f: &[f64], d: &mut [f64]) {
    let n = f.len();
    if n == 0 {
        return;
    }
    let finite: Vec<usize> = (0..n).filter(|&q| f[q].is_finite()).collect();
    if finite.is_empty() {
        d.iter_mut().for_each(|v| *v = f64::INFINITY);
        return;
    }
    // Parabola vertices and the boundaries between them.
    let mut v = vec![0usize; finite.len()];
    let mut z = vec![0.0f64; finite.len() + 1];
    let mut k = 0usize;
    v[0] = finite[0];
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let inter = |q: usize, p: usize| -> f64 {
        let (qf, pf) = (q as f64, p as f64);
        ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * qf - 2.0 * pf)
    };
    for &q in &finite[1..] {
        let mut s = inter(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = inter(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let diff = q as f64 - v[k] as f64;
        *out = diff * diff + f[v[k]];
    }
}

/// Harmonic mean of boundary precision and recall at `tolerance` px.
pub fn boundary_f1(gt: &LabelMask, pred: &LabelMask, tolerance: f64) -> Result<f64> {
    same_dims(gt, pred)?;
    let (w, h) = (gt.width() as usize, gt.height() as usize);
    let gb = boundary_pixels(gt);
    let pb = boundary_pixels(pred);
    let n_g = gb.iter().filter(|b| **b).count();
    let n_p = pb.iter().filter(|b| **b).count();
    match (n_g, n_p) {
        (0, 0) => return Ok(1.0),
        (0, _) | (_, 0) => return Ok(0.0),
        _ => {}
    }
    let tol2 = tolerance * tolerance;
    let dg = squared_distance_transform(&gb, w, h);
    let dp = squared_distance_transform(&pb, w, h);
    let hits = |own: &[bool], other_dt: &[f64]| {
        own.iter()
            .zip(other_dt)
            .filter(|(b, d)| **b && **d <= tol2)
            .count()
    };
    let precision = hits(&pb, &dg) as f64 / n_p as f64;
    let recall = hits(&gb, &dp) as f64 / n_g as f64;
    if precision + recall == 0.0 {
        Ok(0.0)
    } else {
        Ok(2.0 * precision * recall / (precision + recall))
    }
}

/// Predicted minus ground-truth instance count over the full field.
pub fn count_error(gt: &LabelMask, pred: &LabelMask) -> i64 {
    pred.instance_count() as i64 - gt.instance_count() as i64
}

/// `100 · mean |pred − gt| / |gt|`.
pub fn mape(pred: &[f64], gt: &[f64]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch(pred.len(), gt.len()));
    }
    if let Some(i) = gt.iter().position(|&g| g == 0.0) {
        return Err(Error::ZeroGroundTruth(i));
    }
    if gt.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| ((p - g) / g).abs())
        .sum();
    Ok(100.0 * sum / gt.len() as f64)
}

/// Absolute percentage error of one value; `None` when the reference is zero
/// or either side is undefined.
pub fn ape(pred: Option<f64>, gt: Option<f64>) -> Option<f64> {
    match (pred, gt) {
        (Some(p), Some(g)) if g != 0.0 => Some(100.0 * ((p - g) / g).abs()),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CircleMode {
    /// Circle inscribed on ground truth and reused on the prediction.
    GtDerived,
    /// Each mask inscribes its own circle.
    GtFree,
}

impl CircleMode {
    pub const ALL: [CircleMode; 2] = [CircleMode::GtDerived, CircleMode::GtFree];

    pub fn as_str(self) -> &'static str {
        match self {
            CircleMode::GtDerived => "gt-derived",
            CircleMode::GtFree => "gt-free",
        }
    }
}

impl std::str::FromStr for CircleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('_', "-").as_str() {
            "gt-derived" => Ok(CircleMode::GtDerived),
            "gt-free" => Ok(CircleMode::GtFree),
            _ => Err(Error::InvalidParameter(format!(
                "circle mode must be gt-derived or gt-free, got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub boundary_tolerance: f64,
    pub iou_thresholds: Vec<f64>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            boundary_tolerance: DEFAULT_BOUNDARY_TOLERANCE,
            iou_thresholds: default_iou_thresholds(),
        }
    }
}

/// Absolute percentage errors of the Jeffries fields for one image.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct JeffriesErrors {
    pub n_inside_mape: Option<f64>,
    pub n_intercepted_mape: Option<f64>,
    pub n_a_mape: Option<f64>,
    pub g_mape: Option<f64>,
}

impl JeffriesErrors {
    pub fn between(pred: &JeffriesResult, gt: &JeffriesResult) -> Self {
        Self {
            n_inside_mape: ape(Some(pred.n_inside as f64), Some(gt.n_inside as f64)),
            n_intercepted_mape: ape(Some(pred.n_intercepted as f64), Some(gt.n_intercepted as f64)),
            n_a_mape: ape(Some(pred.n_a), Some(gt.n_a)),
            g_mape: ape(pred.g, gt.g),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub image: String,
    pub mode: CircleMode,
    pub target: usize,
    pub ap50: f64,
    pub map_50_95: f64,
    pub boundary_f1: f64,
    pub count_error: i64,
    pub gt: JeffriesResult,
    pub pred: JeffriesResult,
    pub errors: JeffriesErrors,
}

/// Jeffries results for a gt/pred pair under `mode`.
pub fn jeffries_pair(
    gt: &LabelMask,
    pred: &LabelMask,
    cal: Calibration,
    target: usize,
    mode: CircleMode,
) -> Result<(JeffriesResult, JeffriesResult)> {
    same_dims(gt, pred)?;
    let gt_res = jeffries::analyze(gt, cal, target, None)?;
    let pred_res = match mode {
        CircleMode::GtDerived => jeffries::analyze(pred, cal, target, Some(&gt_res.circle))?,
        CircleMode::GtFree => jeffries::analyze(pred, cal, target, None)?,
    };
    Ok((gt_res, pred_res))
}

pub fn evaluate_pair(
    image: &str,
    gt: &LabelMask,
    pred: &LabelMask,
    cal: Calibration,
    target: usize,
    mode: CircleMode,
    opts: &EvalOptions,
) -> Result<PairRecord> {
    let iou = instance_iou_matrix(gt, pred)?;
    let (gt_res, pred_res) = jeffries_pair(gt, pred, cal, target, mode)?;
    Ok(PairRecord {
        image: image.to_string(),
        mode,
        target,
        ap50: average_precision(&match_instances(&iou, 0.5)),
        map_50_95: mean_average_precision(&iou, &opts.iou_thresholds),
        boundary_f1: boundary_f1(gt, pred, opts.boundary_tolerance)?,
        count_error: count_error(gt, pred),
        errors: JeffriesErrors::between(&pred_res, &gt_res),
        gt: gt_res,
        pred: pred_res,
    })
}

/// Named ground-truth / prediction pair.
#[derive(Debug, Clone)]
pub struct MaskPair {
    pub name: String,
    pub gt: LabelMask,
    pub pred: LabelMask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFailure {
    pub image: String,
    pub error: String,
}

/// Means of per-image values; `None` entries are skipped.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub images: usize,
    pub ap50: f64,
    pub map_50_95: f64,
    pub boundary_f1: f64,
    pub count_error: f64,
    pub gt_n_inside: f64,
    pub gt_n_intercepted: f64,
    pub gt_n_a: f64,
    pub gt_g: Option<f64>,
    pub pred_n_inside: f64,
    pub pred_n_intercepted: f64,
    pub pred_n_a: f64,
    pub pred_g: Option<f64>,
    pub n_inside_mape: Option<f64>,
    pub n_intercepted_mape: Option<f64>,
    pub n_a_mape: Option<f64>,
    pub g_mape: Option<f64>,
}

fn mean(it: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

impl Aggregate {
    pub fn from_records(records: &[PairRecord]) -> Self {
        let m = |f: &dyn Fn(&PairRecord) -> f64| mean(records.iter().map(f)).unwrap_or(f64::NAN);
        let mo = |f: &dyn Fn(&PairRecord) -> Option<f64>| mean(records.iter().filter_map(f));
        Self {
            images: records.len(),
            ap50: m(&|r| r.ap50),
            map_50_95: m(&|r| r.map_50_95),
            boundary_f1: m(&|r| r.boundary_f1),
            count_error: m(&|r| r.count_error as f64),
            gt_n_inside: m(&|r| r.gt.n_inside as f64),
            gt_n_intercepted: m(&|r| r.gt.n_intercepted as f64),
            gt_n_a: m(&|r| r.gt.n_a),
            gt_g: mo(&|r| r.gt.g),
            pred_n_inside: m(&|r| r.pred.n_inside as f64),
            pred_n_intercepted: m(&|r| r.pred.n_intercepted as f64),
            pred_n_a: m(&|r| r.pred.n_a),
            pred_g: mo(&|r| r.pred.g),
            n_inside_mape: mo(&|r| r.errors.n_inside_mape),
            n_intercepted_mape: mo(&|r| r.errors.n_intercepted_mape),
            n_a_mape: mo(&|r| r.errors.n_a_mape),
            g_mape: mo(&|r| r.errors.g_mape),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: CircleMode,
    pub target: usize,
    pub records: Vec<PairRecord>,
    pub failures: Vec<PairFailure>,
    pub aggregate: Aggregate,
}

/// Evaluates every pair in parallel; records come back sorted by image name.
pub fn evaluate_dataset(
    pairs: &[MaskPair],
    cal: Calibration,
    target: usize,
    mode: CircleMode,
    opts: &EvalOptions,
) -> EvalReport {
    let results: Vec<(String, Result<PairRecord>)> = pairs
        .par_iter()
        .map(|p| {
            (
                p.name.clone(),
                evaluate_pair(&p.name, &p.gt, &p.pred, cal, target, mode, opts),
            )
        })
        .collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (name, r) in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => failures.push(PairFailure {
                image: name,
                error: e.to_string(),
            }),
        }
    }
    records.sort_by(|a, b| a.image.cmp(&b.image));
    failures.sort_by(|a, b| a.image.cmp(&b.image));
    EvalReport {
        mode,
        target,
        aggregate: Aggregate::from_records(&records),
        records,
        failures,
    }
}

/// One (target, mode) cell of the robustness table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub target: usize,
    pub mode: CircleMode,
    pub images: usize,
    pub gt_count: f64,
    pub gt_n_a: f64,
    pub gt_g: Option<f64>,
    pub pred_count: f64,
    pub pred_n_a: f64,
    pub n_a_mape: Option<f64>,
    pub pred_g: Option<f64>,
    pub g_mape: Option<f64>,
    pub failures: Vec<PairFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessTable {
    pub rows: Vec<RobustnessRow>,
}

impl RobustnessTable {
    pub fn row(&self, target: usize, mode: CircleMode) -> Option<&RobustnessRow> {
        self.rows
            .iter()
            .find(|r| r.target == target && r.mode == mode)
    }
}

/// Jeffries agreement for every `(target, mode)` combination.
///
/// Radial extents depend only on the circle center, so they are computed once
/// per mask and reused across targets. Unreachable targets are recorded per
/// cell, not fatal.
pub fn robustness_sweep(
    pairs: &[MaskPair],
    cal: Calibration,
    targets: &[usize],
    modes: &[CircleMode],
) -> RobustnessTable {
    struct Prepared<'a> {
        name: &'a str,
        gt_ext: Vec<jeffries::RadialExtent>,
        pred_ext: Vec<jeffries::RadialExtent>,
        center: Point,
        dims: (u32, u32),
        mismatch: Option<String>,
    }
    let prepared: Vec<Prepared> = pairs
        .par_iter()
        .map(|p| {
            let center = Point::image_center(p.gt.width(), p.gt.height());
            let mismatch = same_dims(&p.gt, &p.pred).err().map(|e| e.to_string());
            let pred_ext = if mismatch.is_none() {
                jeffries::radial_extents(&p.pred, center)
            } else {
                Vec::new()
            };
            Prepared {
                name: &p.name,
                gt_ext: jeffries::radial_extents(&p.gt, center),
                pred_ext,
                center,
                dims: p.gt.dimensions(),
                mismatch,
            }
        })
        .collect();

    let circle_for = |ext: &[jeffries::RadialExtent], p: &Prepared, target: usize| {
        let r = jeffries::inscription_radius(ext, target, p.center, p.dims.0, p.dims.1)?;
        jeffries::TestCircle::new(p.center, r, cal)
    };

    let mut rows = Vec::new();
    for &target in targets {
        for &mode in modes {
            let mut ok: Vec<(JeffriesResult, JeffriesResult)> = Vec::new();
            let mut failures = Vec::new();
            for p in &prepared {
                let res = (|| -> Result<(JeffriesResult, JeffriesResult)> {
                    if let Some(m) = &p.mismatch {
                        return Err(Error::InvalidParameter(m.clone()));
                    }
                    let gc = circle_for(&p.gt_ext, p, target)?;
                    let pc = match mode {
                        CircleMode::GtDerived => gc,
                        CircleMode::GtFree => circle_for(&p.pred_ext, p, target)?,
                    };
                    Ok((jeffries::measure(&p.gt_ext, gc), jeffries::measure(&p.pred_ext, pc)))
                })();
                match res {
                    Ok(v) => ok.push(v),
                    Err(e) => failures.push(PairFailure {
                        image: p.name.to_string(),
                        error: e.to_string(),
                    }),
                }
            }
            rows.push(RobustnessRow {
                target,
                mode,
                images: ok.len(),
                gt_count: mean(ok.iter().map(|(g, _)| g.n_inside as f64)).unwrap_or(f64::NAN),
                gt_n_a: mean(ok.iter().map(|(g, _)| g.n_a)).unwrap_or(f64::NAN),
                gt_g: mean(ok.iter().filter_map(|(g, _)| g.g)),
                pred_count: mean(ok.iter().map(|(_, p)| p.n_inside as f64)).unwrap_or(f64::NAN),
                pred_n_a: mean(ok.iter().map(|(_, p)| p.n_a)).unwrap_or(f64::NAN),
                n_a_mape: mean(ok.iter().filter_map(|(g, p)| ape(Some(p.n_a), Some(g.n_a)))),
                pred_g: mean(ok.iter().filter_map(|(_, p)| p.g)),
                g_mape: mean(ok.iter().filter_map(|(g, p)| ape(p.g, g.g))),
                failures,
            });
        }
    }
    RobustnessTable { rows }
}
