//! Synthetic Voronoi microstructures with known seed density.
//!
//! Each pixel takes the label of its nearest seed (Euclidean, ties to the
//! lower seed index). With `boundary_thickness = t > 0` pixels within `t / 2`
//! of their cell's edge become background in the label mask and are drawn at
//! 255 in the edge-style companion image, mimicking annotated edge masks.

use std::collections::BTreeSet;

use image::GrayImage;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jeffries::Point;
use crate::mask::{Calibration, LabelMask};
use crate::prep::UnionFind;

/// Longest background run bridged when deciding grain adjacency.
const MAX_GAP: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Degradation {
    pub merge_fraction: f64,
    pub split_fraction: f64,
    pub rng_seed: u64,
}

impl Degradation {
    pub fn merges(fraction: f64, rng_seed: u64) -> Self {
        Self {
            merge_fraction: fraction,
            split_fraction: 0.0,
            rng_seed,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("merge_fraction", self.merge_fraction),
            ("split_fraction", self.split_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub width: u32,
    pub height: u32,
    pub n_seeds: usize,
    pub rng_seed: u64,
    #[serde(default)]
    pub boundary_thickness: u32,
    #[serde(default)]
    pub degradation: Option<Degradation>,
}

impl SynthSpec {
    pub fn new(width: u32, height: u32, n_seeds: usize, rng_seed: u64) -> Self {
        Self {
            width,
            height,
            n_seeds,
            rng_seed,
            boundary_thickness: 0,
            degradation: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_seeds == 0 {
            return Err(Error::InvalidParameter("n_seeds must be at least 1".into()));
        }
        if self.n_seeds > (self.width as usize) * (self.height as usize) {
            return Err(Error::InvalidParameter(
                "n_seeds cannot exceed the pixel count".into(),
            ));
        }
        if self.n_seeds > usize::from(u16::MAX) {
            return Err(Error::LabelOverflow {
                count: self.n_seeds,
            });
        }
        if let Some(d) = &self.degradation {
            d.validate()?;
        }
        Ok(())
    }

    /// Seeds per mm² over the whole canvas.
    pub fn true_density(&self, cal: Calibration) -> f64 {
        self.n_seeds as f64 / cal.pixel_area_to_mm2(f64::from(self.width) * f64::from(self.height))
    }
}

#[derive(Debug, Clone)]
pub struct SynthField {
    pub labels: LabelMask,
    /// 255 on cell boundaries, 0 inside cells.
    pub edges: GrayImage,
    pub seeds: Vec<Point>,
}

/// Uniform seeds over the canvas area (pixel `i` covers `[i − ½, i + ½)`).
pub fn random_seeds(width: u32, height: u32, n: usize, rng_seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    (0..n)
        .map(|_| {
            Point::new(
                rng.gen::<f64>() * f64::from(width) - 0.5,
                rng.gen::<f64>() * f64::from(height) - 0.5,
            )
        })
        .collect()
}

pub fn generate_voronoi(spec: &SynthSpec) -> Result<SynthField> {
    spec.validate()?;
    let seeds = random_seeds(spec.width, spec.height, spec.n_seeds, spec.rng_seed);
    voronoi_from_seeds(spec.width, spec.height, &seeds, spec.boundary_thickness)
}

/// Bucket grid over seed positions for nearest-seed queries.
struct SeedGrid<'a> {
    seeds: &'a [Point],
    cell: f64,
    cols: i64,
    rows: i64,
    buckets: Vec<Vec<u32>>,
}

impl<'a> SeedGrid<'a> {
    fn new(width: u32, height: u32, seeds: &'a [Point]) -> Self {
        let area = f64::from(width) * f64::from(height);
        let cell = (area / seeds.len() as f64).sqrt().max(1.0);
        let cols = (f64::from(width) / cell).ceil() as i64 + 1;
        let rows = (f64::from(height) / cell).ceil() as i64 + 1;
        let mut buckets = vec![Vec::new(); (cols * rows) as usize];
        let mut grid = Self {
            seeds,
            cell,
            cols,
            rows,
            buckets: Vec::new(),
        };
        for (i, s) in seeds.iter().enumerate() {
            let (cx, cy) = grid.cell_of(s.x, s.y);
            buckets[(cy * cols + cx) as usize].push(i as u32);
        }
        grid.buckets = buckets;
        grid
    }

    fn cell_of(&self, x: f64, y: f64) -> (i64, i64) {
        let cx = (((x + 0.5) / self.cell).floor() as i64).clamp(0, self.cols - 1);
        let cy = (((y + 0.5) / self.cell).floor() as i64).clamp(0, self.rows - 1);
        (cx, cy)
    }

    /// Nearest seed index and whether `p` lies within `half_band` of its cell edge.
    fn query(&self, p: Point, half_band: f64) -> (usize, bool) {
        let (cx, cy) = self.cell_of(p.x, p.y);
        let mut best = (f64::INFINITY, usize::MAX);
        let mut near: Vec<(usize, f64)> = Vec::new();
        let max_ring = self.cols.max(self.rows);
        for k in 0..=max_ring {
            for (bx, by) in ring(cx, cy, k) {
                if bx < 0 || by < 0 || bx >= self.cols || by >= self.rows {
                    continue;
                }
                for &si in &self.buckets[(by * self.cols + bx) as usize] {
                    let s = self.seeds[si as usize];
                    let d2 = (p.x - s.x) * (p.x - s.x) + (p.y - s.y) * (p.y - s.y);
                    if (d2, si as usize) < best {
                        best = (d2, si as usize);
                    }
                    if half_band > 0.0 {
                        near.push((si as usize, d2));
                    }
                }
            }
            // Everything in ring k+1 is at least k cells away.
            let reach = best.0.sqrt() + 2.0 * half_band;
            let lb = k as f64 * self.cell;
            if lb > reach * (1.0 + 1e-9) + 1e-9 {
                break;
            }
        }
        let nearest = best.1;
        if half_band <= 0.0 {
            return (nearest, false);
        }
        let a = self.seeds[nearest];
        let on_edge = near.iter().any(|&(xi, dx2)| {
            if xi == nearest {
                return false;
            }
            let x = self.seeds[xi];
            let sep = ((a.x - x.x).powi(2) + (a.y - x.y).powi(2)).sqrt();
            // Distance from p to the bisector of a and x.
            sep == 0.0 || (dx2 - best.0) / (2.0 * sep) <= half_band
        });
        (nearest, on_edge)
    }
}

fn ring(cx: i64, cy: i64, k: i64) -> impl Iterator<Item = (i64, i64)> {
    let cells: Vec<(i64, i64)> = if k == 0 {
        vec![(cx, cy)]
    } else {
        let mut v = Vec::with_capacity((8 * k) as usize);
        for dx in -k..=k {
            v.push((cx + dx, cy - k));
            v.push((cx + dx, cy + k));
        }
        for dy in (-k + 1)..k {
            v.push((cx - k, cy + dy));
            v.push((cx + k, cy + dy));
        }
        v
    };
    cells.into_iter()
}

/// Labels every pixel by nearest seed (`label = seed index + 1`).
///
/// Seeds must lie in the canvas area `[-½, w − ½) × [-½, h − ½)`.
pub fn voronoi_from_seeds(
    width: u32,
    height: u32,
    seeds: &[Point],
    boundary_thickness: u32,
) -> Result<SynthField> {
    if seeds.is_empty() {
        return Err(Error::InvalidParameter("at least one seed is required".into()));
    }
    if seeds.len() > usize::from(u16::MAX) {
        return Err(Error::LabelOverflow { count: seeds.len() });
    }
    let (wf, hf) = (f64::from(width), f64::from(height));
    if let Some(s) = seeds
        .iter()
        .find(|s| !(s.x >= -0.5 && s.x < wf - 0.5 && s.y >= -0.5 && s.y < hf - 0.5))
    {
        return Err(Error::OutsideImage {
            x: s.x,
            y: s.y,
            width,
            height,
        });
    }
    let grid = SeedGrid::new(width, height, seeds);
    let half_band = f64::from(boundary_thickness) / 2.0;
    let w = width as usize;
    let mut labels = vec![0u16; w * height as usize];
    let mut edges = vec![0u8; w * height as usize];
    labels
        .par_chunks_mut(w.max(1))
        .zip(edges.par_chunks_mut(w.max(1)))
        .enumerate()
        .for_each(|(y, (lrow, erow))| {
            for x in 0..w {
                let (nearest, on_edge) = grid.query(Point::new(x as f64, y as f64), half_band);
                if on_edge {
                    erow[x] = 255;
                } else {
                    lrow[x] = (nearest + 1) as u16;
                }
            }
        });
    Ok(SynthField {
        labels: LabelMask::new(width, height, labels)?,
        edges: GrayImage::from_raw(width, height, edges).expect("sized above"),
        seeds: seeds.to_vec(),
    })
}

/// Background runs of at most [`MAX_GAP`] pixels bounded by two labels,
/// scanned along rows and columns: `(start index, step, len, left, right)`.
fn gap_runs(mask: &LabelMask) -> Vec<(usize, usize, usize, u16, u16)> {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let l = mask.labels();
    let mut out = Vec::new();
    let mut scan = |start: usize, step: usize, n: usize| {
        let mut last: Option<(u16, usize)> = None;
        for k in 0..n {
            let v = l[start + k * step];
            if v == 0 {
                continue;
            }
            if let Some((prev, pk)) = last {
                let gap = k - pk - 1;
                if prev != v && gap <= MAX_GAP {
                    out.push((start + (pk + 1) * step, step, gap, prev, v));
                }
            }
            last = Some((v, k));
        }
    };
    for y in 0..h {
        scan(y * w, 1, w);
    }
    for x in 0..w {
        scan(x, w, h);
    }
    out
}

/// Pairs of distinct labels separated by at most [`MAX_GAP`] background pixels.
pub fn adjacent_pairs(mask: &LabelMask) -> Vec<(u16, u16)> {
    gap_runs(mask)
        .into_iter()
        .map(|(_, _, _, a, b)| (a.min(b), a.max(b)))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Simulates segmentation failures: merges adjacent grains (erasing the gap
/// between them) and bisects grains along random chords through their centroid.
///
/// The number of merges is `round(merge_fraction · instances)`, the number of
/// splits `round(split_fraction · instances after merging)`.
pub fn degrade(mask: &LabelMask, d: &Degradation) -> Result<LabelMask> {
    d.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(d.rng_seed);
    let mut out = mask.clone();

    if d.merge_fraction > 0.0 {
        let n = mask.instance_count();
        let wanted = (d.merge_fraction * n as f64).round() as usize;
        let mut pairs = adjacent_pairs(mask);
        pairs.shuffle(&mut rng);
        let mut uf = UnionFind::with_len(usize::from(mask.max_id()) + 1);
        let mut done = 0;
        for (a, b) in pairs {
            if done == wanted {
                break;
            }
            if uf.find(u32::from(a)) != uf.find(u32::from(b)) {
                uf.union(u32::from(a), u32::from(b));
                done += 1;
            }
        }
        let runs = gap_runs(mask);
        let labels: Vec<u16> = mask
            .labels()
            .iter()
            .map(|&l| if l == 0 { 0 } else { uf.find(u32::from(l)) as u16 })
            .collect();
        let mut merged = LabelMask::new(mask.width(), mask.height(), labels)?;
        let w = mask.width() as usize;
        for (start, step, len, a, b) in runs {
            let ra = uf.find(u32::from(a));
            if ra == uf.find(u32::from(b)) {
                for k in 0..len {
                    let i = start + k * step;
                    merged.set((i % w) as u32, (i / w) as u32, ra as u16);
                }
            }
        }
        out = merged;
    }

    if d.split_fraction > 0.0 {
        let grains = out.instances();
        let wanted = (d.split_fraction * grains.len() as f64).round() as usize;
        let mut order: Vec<usize> = (0..grains.len()).collect();
        order.shuffle(&mut rng);
        let mut next_id = u32::from(out.max_id()) + 1;
        for &gi in order.iter().take(wanted) {
            if next_id > u32::from(u16::MAX) {
                log::warn!("split budget stopped at the 16-bit label limit");
                break;
            }
            let g = &grains[gi];
            let n = g.pixels.len() as f64;
            let cx = g.pixels.iter().map(|p| f64::from(p.0)).sum::<f64>() / n;
            let cy = g.pixels.iter().map(|p| f64::from(p.1)).sum::<f64>() / n;
            let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
            let (nx, ny) = (theta.cos(), theta.sin());
            let side: Vec<bool> = g
                .pixels
                .iter()
                .map(|&(x, y)| (f64::from(x) - cx) * nx + (f64::from(y) - cy) * ny > 0.0)
                .collect();
            let moved = side.iter().filter(|s| **s).count();
            if moved == 0 || moved == side.len() {
                continue;
            }
            for (&(x, y), &s) in g.pixels.iter().zip(&side) {
                if s {
                    out.set(x, y, next_id as u16);
                }
            }
            next_id += 1;
        }
    }

    Ok(out.relabel_contiguous())
}
