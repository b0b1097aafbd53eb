//! Brute-force reference implementations and fixture generators shared by the
//! integration suites. Everything here is deliberately naive.

#![allow(dead_code)]

use std::collections::{BTreeMap, VecDeque};

use grainsize::jeffries::Point;
use grainsize::prep::{BinaryMask, Connectivity};
use grainsize::synth::{self, SynthSpec};
use grainsize::LabelMask;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `(d_min, d_max)` per grain from a plain scan with a per-pixel square root.
pub fn brute_extents(mask: &LabelMask, c: Point) -> BTreeMap<u16, (f64, f64)> {
    let mut out: BTreeMap<u16, (f64, f64)> = BTreeMap::new();
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            let id = mask.get(x, y);
            if id == 0 {
                continue;
            }
            let dx = f64::from(x) - c.x;
            let dy = f64::from(y) - c.y;
            let d = (dx * dx + dy * dy).sqrt();
            let e = out.entry(id).or_insert((f64::INFINITY, f64::NEG_INFINITY));
            e.0 = e.0.min(d);
            e.1 = e.1.max(d);
        }
    }
    out
}

/// BFS flood fill; components are numbered in raster order of their first pixel.
pub fn flood_fill_labels(mask: &BinaryMask, conn: Connectivity) -> Vec<u32> {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let mut labels = vec![0u32; (w * h) as usize];
    let steps: &[(i64, i64)] = match conn {
        Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
        Connectivity::Eight => &[
            (1, 0),
            (-1, 0),
            (0, 1),
            (0, -1),
            (1, 1),
            (1, -1),
            (-1, 1),
            (-1, -1),
        ],
    };
    let mut next = 0;
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) as usize;
            if !mask.bits()[i] || labels[i] != 0 {
                continue;
            }
            next += 1;
            labels[i] = next;
            let mut q = VecDeque::from([(x, y)]);
            while let Some((px, py)) = q.pop_front() {
                for &(dx, dy) in steps {
                    let (nx, ny) = (px + dx, py + dy);
                    if nx < 0 || ny < 0 || nx >= w || ny >= h {
                        continue;
                    }
                    let j = (ny * w + nx) as usize;
                    if mask.bits()[j] && labels[j] == 0 {
                        labels[j] = next;
                        q.push_back((nx, ny));
                    }
                }
            }
        }
    }
    labels
}

/// IoU of every gt/pred instance pair by direct set counting.
pub fn brute_iou(gt: &LabelMask, pred: &LabelMask) -> BTreeMap<(u16, u16), f64> {
    let mut out = BTreeMap::new();
    for g in gt.instance_ids() {
        for p in pred.instance_ids() {
            let (mut inter, mut union) = (0u64, 0u64);
            for (&a, &b) in gt.labels().iter().zip(pred.labels()) {
                let (ia, ib) = (a == g, b == p);
                inter += u64::from(ia && ib);
                union += u64::from(ia || ib);
            }
            if inter > 0 {
                out.insert((g, p), inter as f64 / union as f64);
            }
        }
    }
    out
}

/// Largest number of one-to-one pairs with IoU ≥ τ, by exhaustive search.
pub fn exhaustive_max_matching(
    gt_ids: &[u16],
    pred_ids: &[u16],
    iou: &BTreeMap<(u16, u16), f64>,
    tau: f64,
) -> usize {
    fn go(
        i: usize,
        gt_ids: &[u16],
        pred_ids: &[u16],
        used: &mut Vec<bool>,
        iou: &BTreeMap<(u16, u16), f64>,
        tau: f64,
    ) -> usize {
        if i == gt_ids.len() {
            return 0;
        }
        // Leave this gt unmatched.
        let mut best = go(i + 1, gt_ids, pred_ids, used, iou, tau);
        for (j, &p) in pred_ids.iter().enumerate() {
            if used[j] || iou.get(&(gt_ids[i], p)).copied().unwrap_or(0.0) < tau {
                continue;
            }
            used[j] = true;
            best = best.max(1 + go(i + 1, gt_ids, pred_ids, used, iou, tau));
            used[j] = false;
        }
        best
    }
    go(0, gt_ids, pred_ids, &mut vec![false; pred_ids.len()], iou, tau)
}

/// Nearest seed by linear scan, ties to the lower index.
pub fn brute_nearest(seeds: &[Point], x: f64, y: f64) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, s) in seeds.iter().enumerate() {
        let d = (s.x - x).powi(2) + (s.y - y).powi(2);
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

/// Voronoi label mask with `n` seeds; `thickness` px of background along edges.
pub fn voronoi(w: u32, h: u32, n: usize, thickness: u32, seed: u64) -> LabelMask {
    let mut spec = SynthSpec::new(w, h, n, seed);
    spec.boundary_thickness = thickness;
    synth::generate_voronoi(&spec).unwrap().labels
}

/// Random mask with at most `max_instances` grains and some background.
pub fn random_label_mask(w: u32, h: u32, max_instances: usize, seed: u64) -> LabelMask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_instances);
    let t = rng.gen_range(0..=2);
    let mut m = voronoi(w, h, n, t, rng.gen());
    // Punch a random background hole so not everything tiles.
    let (cx, cy, r) = (
        rng.gen_range(0..w),
        rng.gen_range(0..h),
        rng.gen_range(0..w / 4 + 1),
    );
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (i64::from(x) - i64::from(cx), i64::from(y) - i64::from(cy));
            if dx * dx + dy * dy < i64::from(r * r) {
                m.set(x, y, 0);
            }
        }
    }
    m.relabel_contiguous()
}

/// Translates every label by `(dx, dy)`, filling exposed pixels with background.
pub fn shifted(mask: &LabelMask, dx: i64, dy: i64) -> LabelMask {
    let (w, h) = (i64::from(mask.width()), i64::from(mask.height()));
    LabelMask::from_fn(mask.width(), mask.height(), |x, y| {
        let (sx, sy) = (i64::from(x) - dx, i64::from(y) - dy);
        if sx < 0 || sy < 0 || sx >= w || sy >= h {
            0
        } else {
            mask.get(sx as u32, sy as u32)
        }
    })
}

pub fn random_binary(w: u32, h: u32, p: f64, seed: u64) -> BinaryMask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    BinaryMask::from_fn(w, h, |_, _| rng.gen_bool(p))
}
