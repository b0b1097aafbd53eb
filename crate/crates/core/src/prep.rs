//! Conversion of edge-annotated masks into instance label maps.
//!
//! Pipeline: binarize interiors (`I < threshold`), erode with a discrete disk,
//! label connected components, drop components below `min_area`, then
//! renumber the survivors contiguously.

use image::GrayImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::LabelMask;

/// Pixel adjacency used for component labeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    #[default]
    Four,
    Eight,
}

impl TryFrom<u8> for Connectivity {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            _ => Err(Error::InvalidParameter(format!(
                "connectivity must be 4 or 8, got {v}"
            ))),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrepConfig {
    /// Pixels strictly darker than this are grain interior.
    pub threshold: u8,
    pub erosion_radius: u32,
    pub min_area: usize,
    pub connectivity: Connectivity,
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self {
            threshold: 128,
            erosion_radius: 1,
            min_area: 200,
            connectivity: Connectivity::Four,
        }
    }
}

impl PrepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.threshold == 0 {
            return Err(Error::InvalidParameter(
                "threshold must be in 1..=255".into(),
            ));
        }
        Ok(())
    }
}

/// Row-major boolean grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != (width as usize) * (height as usize) {
            return Err(Error::GridSize {
                width,
                height,
                len: bits.len(),
            });
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut bits = Vec::with_capacity((width as usize) * (height as usize));
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[(y as usize) * (self.width as usize) + (x as usize)]
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// True when every set bit of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(a, b)| !*a || *b)
    }
}

/// Sets a bit exactly where `intensity < threshold`.
pub fn binarize_interiors(image: &GrayImage, threshold: u8) -> BinaryMask {
    BinaryMask {
        width: image.width(),
        height: image.height(),
        bits: image.as_raw().iter().map(|&p| p < threshold).collect(),
    }
}

/// Offsets of the discrete disk `dx² + dy² ≤ r²`. Radius 1 is the 5-pixel cross.
pub fn disk_offsets(radius: u32) -> Vec<(i32, i32)> {
    let r = radius as i32;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Binary erosion by a disk; pixels outside the image count as unset.
pub fn erode(mask: &BinaryMask, radius: u32) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let offsets = disk_offsets(radius);
    let (w, h) = (mask.width as i64, mask.height as i64);
    let bits = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| {
            offsets.iter().all(|&(dx, dy)| {
                let nx = x + i64::from(dx);
                let ny = y + i64::from(dy);
                nx >= 0 && ny >= 0 && nx < w && ny < h && mask.bits[(ny * w + nx) as usize]
            })
        })
        .collect();
    BinaryMask {
        width: mask.width,
        height: mask.height,
        bits,
    }
}

/// Clears every component whose area is strictly below `min_area`.
pub fn filter_small(components: &LabelMask, min_area: usize) -> BinaryMask {
    let mut areas = vec![0usize; usize::from(components.max_id()) + 1];
    for &l in components.labels() {
        areas[usize::from(l)] += 1;
    }
    BinaryMask {
        width: components.width(),
        height: components.height(),
        bits: components
            .labels()
            .iter()
            .map(|&l| l != 0 && areas[usize::from(l)] >= min_area)
            .collect(),
    }
}

/// Labels connected components `1..=K` in raster order of first pixel.
///
/// Fails rather than wrapping when `K` exceeds 65535.
pub fn label_components(mask: &BinaryMask, connectivity: Connectivity) -> Result<LabelMask> {
    let (labels, count) = label_components_wide(mask, connectivity);
    if count > usize::from(u16::MAX) {
        return Err(Error::LabelOverflow { count });
    }
    LabelMask::new(
        mask.width,
        mask.height,
        labels.into_iter().map(|l| l as u16).collect(),
    )
}

/// Two-pass union-find labeling with 32-bit labels.
pub(crate) fn label_components_wide(
    mask: &BinaryMask,
    connectivity: Connectivity,
) -> (Vec<u32>, usize) {
    let w = mask.width as usize;
    let h = mask.height as usize;
    let mut uf = UnionFind::default();
    let mut prov = vec![u32::MAX; w * h];

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !mask.bits[i] {
                continue;
            }
            let mut neigh = [u32::MAX; 4];
            if x > 0 {
                neigh[0] = prov[i - 1];
            }
            if y > 0 {
                neigh[1] = prov[i - w];
                if connectivity == Connectivity::Eight {
                    if x > 0 {
                        neigh[2] = prov[i - w - 1];
                    }
                    if x + 1 < w {
                        neigh[3] = prov[i - w + 1];
                    }
                }
            }
            let mut label = u32::MAX;
            for &n in neigh.iter().filter(|&&n| n != u32::MAX) {
                if label == u32::MAX {
                    label = n;
                } else {
                    uf.union(label, n);
                }
            }
            if label == u32::MAX {
                label = uf.make();
            }
            prov[i] = label;
        }
    }

    // Second pass: resolve roots, numbering in raster order of first pixel.
    let mut final_of_root = vec![0u32; uf.len()];
    let mut next = 0u32;
    let labels = prov
        .into_iter()
        .map(|p| {
            if p == u32::MAX {
                return 0;
            }
            let root = uf.find(p) as usize;
            if final_of_root[root] == 0 {
                next += 1;
                final_of_root[root] = next;
            }
            final_of_root[root]
        })
        .collect();
    (labels, next as usize)
}

#[derive(Default)]
pub(crate) struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    pub(crate) fn with_len(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
        }
    }

    pub(crate) fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    pub(crate) fn len(&self) -> usize {
        self.parent.len()
    }

    pub(crate) fn find(&mut self, mut a: u32) -> u32 {
        while self.parent[a as usize] != a {
            let gp = self.parent[self.parent[a as usize] as usize];
            self.parent[a as usize] = gp;
            a = gp;
        }
        a
    }

    /// Links the larger root under the smaller; returns the surviving root.
    pub(crate) fn union(&mut self, a: u32, b: u32) -> u32 {
        let ra = self.find(a);
        let rb = self.find(b);
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi as usize] = lo;
        lo
    }
}

/// Full conversion: binarize → erode → label → size filter → relabel.
pub fn prepare_mask(raw: &GrayImage, cfg: &PrepConfig) -> Result<LabelMask> {
    cfg.validate()?;
    let interiors = binarize_interiors(raw, cfg.threshold);
    let eroded = erode(&interiors, cfg.erosion_radius);
    // Wide labels here so specks that are about to be filtered cannot overflow.
    let (wide, count) = label_components_wide(&eroded, cfg.connectivity);
    let mut areas = vec![0usize; count + 1];
    for &l in &wide {
        areas[l as usize] += 1;
    }
    let kept = BinaryMask {
        width: eroded.width,
        height: eroded.height,
        bits: wide
            .iter()
            .map(|&l| l != 0 && areas[l as usize] >= cfg.min_area)
            .collect(),
    };
    label_components(&kept, cfg.connectivity)
}
