//! Instance label masks and spatial calibration.
//!
//! A [`LabelMask`] is the currency shared by every stage: a row-major grid of
//! 16-bit instance IDs where `0` is background. Storing `u16` makes the
//! 65535-instance ceiling a type-level guarantee.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pixels per micrometre used when no calibration is supplied.
pub const DEFAULT_PIXELS_PER_MICRON: f64 = 2.26;

/// Row-major grid of instance IDs (`0` = background).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    width: u32,
    height: u32,
    labels: Vec<u16>,
}

impl LabelMask {
    pub fn new(width: u32, height: u32, labels: Vec<u16>) -> Result<Self> {
        if labels.len() != (width as usize) * (height as usize) {
            return Err(Error::GridSize {
                width,
                height,
                len: labels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    /// All-background mask.
    pub fn zeros(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            labels: vec![0; (width as usize) * (height as usize)],
        }
    }

    /// Builds a mask by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> u16) -> Self {
        let mut labels = Vec::with_capacity((width as usize) * (height as usize));
        for y in 0..height {
            for x in 0..width {
                labels.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            labels,
        }
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    #[inline]
    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn into_labels(self) -> Vec<u16> {
        self.labels
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u16 {
        self.labels[self.index(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, id: u16) {
        let i = self.index(x, y);
        self.labels[i] = id;
    }

    #[inline]
    fn index(&self, x: u32, y: u32) -> usize {
        debug_assert!(x < self.width && y < self.height);
        (y as usize) * (self.width as usize) + (x as usize)
    }

    pub fn max_id(&self) -> u16 {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    /// Sorted distinct nonzero IDs.
    pub fn instance_ids(&self) -> Vec<u16> {
        let mut seen = vec![false; usize::from(self.max_id()) + 1];
        for &l in &self.labels {
            seen[usize::from(l)] = true;
        }
        seen.iter()
            .enumerate()
            .skip(1)
            .filter(|(_, s)| **s)
            .map(|(id, _)| id as u16)
            .collect()
    }

    pub fn instance_count(&self) -> usize {
        self.instance_ids().len()
    }

    pub fn foreground_pixels(&self) -> usize {
        self.labels.iter().filter(|&&l| l != 0).count()
    }

    /// Per-grain index: one entry per distinct nonzero ID, sorted by ID.
    pub fn instances(&self) -> Vec<GrainInstance> {
        let mut by_id: BTreeMap<u16, GrainInstance> = BTreeMap::new();
        let w = self.width as usize;
        for (i, &id) in self.labels.iter().enumerate() {
            if id == 0 {
                continue;
            }
            let x = (i % w) as u32;
            let y = (i / w) as u32;
            by_id
                .entry(id)
                .or_insert_with(|| GrainInstance {
                    id,
                    area: 0,
                    bbox: BoundingBox {
                        min_x: x,
                        min_y: y,
                        max_x: x,
                        max_y: y,
                    },
                    pixels: Vec::new(),
                })
                .push(x, y);
        }
        by_id.into_values().collect()
    }

    /// Renumbers instances to `1..=K` in raster order of their first pixel.
    pub fn relabel_contiguous(&self) -> LabelMask {
        let mut map = vec![0u16; usize::from(self.max_id()) + 1];
        let mut next = 0u16;
        let labels = self
            .labels
            .iter()
            .map(|&l| {
                if l == 0 {
                    return 0;
                }
                let slot = &mut map[usize::from(l)];
                if *slot == 0 {
                    next += 1;
                    *slot = next;
                }
                *slot
            })
            .collect();
        LabelMask {
            width: self.width,
            height: self.height,
            labels,
        }
    }
}

/// Inclusive pixel bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_x: u32,
    pub min_y: u32,
    pub max_x: u32,
    pub max_y: u32,
}

impl BoundingBox {
    pub fn contains(&self, x: u32, y: u32) -> bool {
        (self.min_x..=self.max_x).contains(&x) && (self.min_y..=self.max_y).contains(&y)
    }
}

/// One labeled grain.
#[derive(Debug, Clone, PartialEq)]
pub struct GrainInstance {
    pub id: u16,
    pub area: usize,
    pub bbox: BoundingBox,
    pub pixels: Vec<(u32, u32)>,
}

impl GrainInstance {
    fn push(&mut self, x: u32, y: u32) {
        self.area += 1;
        self.bbox.min_x = self.bbox.min_x.min(x);
        self.bbox.min_y = self.bbox.min_y.min(y);
        self.bbox.max_x = self.bbox.max_x.max(x);
        self.bbox.max_y = self.bbox.max_y.max(y);
        self.pixels.push((x, y));
    }
}

/// Spatial calibration in pixels per micrometre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Calibration(f64);

impl Calibration {
    pub fn new(pixels_per_micron: f64) -> Result<Self> {
        if pixels_per_micron.is_finite() && pixels_per_micron > 0.0 {
            Ok(Self(pixels_per_micron))
        } else {
            Err(Error::InvalidParameter(format!(
                "calibration must be a positive number of px/um, got {pixels_per_micron}"
            )))
        }
    }

    #[inline]
    pub fn pixels_per_micron(self) -> f64 {
        self.0
    }

    /// Physical area in mm² covered by `pixels` square pixels.
    pub fn pixel_area_to_mm2(self, pixels: f64) -> f64 {
        pixels / (self.0 * self.0 * 1e6)
    }
}

impl Default for Calibration {
    fn default() -> Self {
        Self(DEFAULT_PIXELS_PER_MICRON)
    }
}

impl TryFrom<f64> for Calibration {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<Calibration> for f64 {
    fn from(c: Calibration) -> f64 {
        c.0
    }
}
