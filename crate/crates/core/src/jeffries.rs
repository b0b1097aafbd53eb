//! Jeffries planimetric grain counting.
//!
//! Every grain is reduced to the closest and farthest of its pixel centers as
//! seen from the test-circle center. A grain whose farthest pixel lies within
//! the radius counts as inside; one that straddles the radius is intercepted
//! and counts as half:
//!
//! ```text
//! N_A = f * (N_inside + N_intercepted / 2)
//! G   = 3.321928 * log10(N_A) - 2.954
//! ```
//!
//! With a calibrated circle of radius `r` px the multiplier is
//! `f = 1 / A_circle`, `A_circle = π r² / (c² · 10⁶)` mm². The circle radius
//! is chosen as the smallest value that puts `target` grains fully inside.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{Calibration, LabelMask};

/// Coefficient of `log10(N_A)` in the grain size number (≈ 1 / log10 2).
#[allow(clippy::approx_constant)] // the standard publishes the rounded value
pub const G_SLOPE: f64 = 3.321928;
/// Constant offset of the grain size number.
pub const G_OFFSET: f64 = 2.954;
/// Fewest grains inside the test figure accepted by the standard.
pub const ASTM_MIN_GRAINS: usize = 50;
pub const DEFAULT_TARGET_GRAINS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Center of a `width` x `height` pixel grid, in pixel-center coordinates.
    pub fn image_center(width: u32, height: u32) -> Self {
        Self {
            x: (f64::from(width) - 1.0) / 2.0,
            y: (f64::from(height) - 1.0) / 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialExtent {
    pub grain_id: u16,
    pub d_min: f64,
    pub d_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestCircle {
    pub center: Point,
    pub radius: f64,
    pub physical_area_mm2: f64,
}

impl TestCircle {
    pub fn new(center: Point, radius: f64, cal: Calibration) -> Result<Self> {
        Ok(Self {
            center,
            radius,
            physical_area_mm2: physical_area(radius, cal)?,
        })
    }

    /// Largest radius that keeps a circle at `center` on a `w` x `h` canvas.
    pub fn fit_limit(center: Point, width: u32, height: u32) -> f64 {
        let right = f64::from(width) - 1.0 - center.x;
        let bottom = f64::from(height) - 1.0 - center.y;
        center.x.min(center.y).min(right).min(bottom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrainClass {
    Inside,
    Intercepted,
    Outside,
}

/// Partition of grain IDs relative to a circle; each list is sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub inside: Vec<u16>,
    pub intercepted: Vec<u16>,
    pub outside: Vec<u16>,
}

impl Classification {
    pub fn class_of(&self, id: u16) -> Option<GrainClass> {
        if self.inside.binary_search(&id).is_ok() {
            Some(GrainClass::Inside)
        } else if self.intercepted.binary_search(&id).is_ok() {
            Some(GrainClass::Intercepted)
        } else if self.outside.binary_search(&id).is_ok() {
            Some(GrainClass::Outside)
        } else {
            None
        }
    }

    pub fn total(&self) -> usize {
        self.inside.len() + self.intercepted.len() + self.outside.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JeffriesResult {
    pub n_inside: usize,
    pub n_intercepted: usize,
    pub f: f64,
    pub n_a: f64,
    /// `None` when `n_a` is zero (empty circle).
    pub g: Option<f64>,
    pub circle: TestCircle,
}

/// How the Jeffries multiplier is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MultiplierMode {
    /// `1 / area` for a test figure of known physical area in mm².
    Dynamic { area_mm2: f64 },
    /// `0.0002 M²` for the 5000 mm² standard figure at magnification `M`.
    Magnification { m: f64 },
}

/// Min and max center-to-pixel distance of every grain, sorted by ID.
///
/// The scan runs row-parallel; min/max reductions make the result independent
/// of the schedule.
pub fn radial_extents(mask: &LabelMask, center: Point) -> Vec<RadialExtent> {
    let slots = usize::from(mask.max_id()) + 1;
    let w = mask.width() as usize;
    if w == 0 || slots == 1 {
        return Vec::new();
    }
    let empty = || vec![(f64::INFINITY, f64::NEG_INFINITY); slots];
    let acc = mask
        .labels()
        .par_chunks(w)
        .enumerate()
        .fold(empty, |mut acc, (y, row)| {
            let dy = y as f64 - center.y;
            let dy2 = dy * dy;
            for (x, &id) in row.iter().enumerate() {
                if id == 0 {
                    continue;
                }
                let dx = x as f64 - center.x;
                let d2 = dx * dx + dy2;
                let e = &mut acc[usize::from(id)];
                e.0 = e.0.min(d2);
                e.1 = e.1.max(d2);
            }
            acc
        })
        .reduce(empty, |mut a, b| {
            for (ea, eb) in a.iter_mut().zip(b) {
                ea.0 = ea.0.min(eb.0);
                ea.1 = ea.1.max(eb.1);
            }
            a
        });
    acc.into_iter()
        .enumerate()
        .skip(1)
        .filter(|(_, (lo, _))| lo.is_finite())
        .map(|(id, (lo, hi))| RadialExtent {
            grain_id: id as u16,
            d_min: lo.sqrt(),
            d_max: hi.sqrt(),
        })
        .collect()
}

/// Inside iff `d_max ≤ r`; intercepted iff `d_min ≤ r < d_max`; otherwise outside.
pub fn classify(extents: &[RadialExtent], radius: f64) -> Classification {
    let mut c = Classification::default();
    for e in extents {
        match classify_one(e, radius) {
            GrainClass::Inside => c.inside.push(e.grain_id),
            GrainClass::Intercepted => c.intercepted.push(e.grain_id),
            GrainClass::Outside => c.outside.push(e.grain_id),
        }
    }
    c.inside.sort_unstable();
    c.intercepted.sort_unstable();
    c.outside.sort_unstable();
    c
}

#[inline]
pub fn classify_one(e: &RadialExtent, radius: f64) -> GrainClass {
    if e.d_max <= radius {
        GrainClass::Inside
    } else if e.d_min <= radius {
        GrainClass::Intercepted
    } else {
        GrainClass::Outside
    }
}

/// Smallest on-canvas circle around `center` (default: image center) holding
/// at least `target` whole grains.
pub fn inscribe_circle(
    mask: &LabelMask,
    target: usize,
    center: Option<Point>,
    cal: Calibration,
) -> Result<TestCircle> {
    let center = center.unwrap_or_else(|| Point::image_center(mask.width(), mask.height()));
    check_center(mask, center)?;
    let extents = radial_extents(mask, center);
    let radius = inscription_radius(&extents, target, center, mask.width(), mask.height())?;
    TestCircle::new(center, radius, cal)
}

/// The `target`-th smallest `d_max`, subject to the on-canvas fit limit.
pub fn inscription_radius(
    extents: &[RadialExtent],
    target: usize,
    center: Point,
    width: u32,
    height: u32,
) -> Result<f64> {
    if target == 0 {
        return Err(Error::InvalidParameter("target must be at least 1".into()));
    }
    if extents.is_empty() {
        return Err(Error::EmptyMask);
    }
    let limit = TestCircle::fit_limit(center, width, height);
    let mut d_max: Vec<f64> = extents
        .iter()
        .map(|e| e.d_max)
        .filter(|&d| d <= limit)
        .collect();
    if d_max.len() < target {
        return Err(Error::TargetUnreachable {
            target,
            available: d_max.len(),
        });
    }
    d_max.sort_unstable_by(f64::total_cmp);
    let radius = d_max[target - 1];
    if radius <= 0.0 {
        return Err(Error::InvalidParameter(
            "inscribed radius is zero; target must include grains beyond the center pixel".into(),
        ));
    }
    Ok(radius)
}

fn check_center(mask: &LabelMask, c: Point) -> Result<()> {
    let inside = c.x >= 0.0
        && c.y >= 0.0
        && c.x <= f64::from(mask.width()) - 1.0
        && c.y <= f64::from(mask.height()) - 1.0;
    if inside {
        Ok(())
    } else {
        Err(Error::OutsideImage {
            x: c.x,
            y: c.y,
            width: mask.width(),
            height: mask.height(),
        })
    }
}

/// Circle area in mm²: `π r² / (c² · 10⁶)`.
pub fn physical_area(radius: f64, cal: Calibration) -> Result<f64> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "radius must be positive, got {radius}"
        )));
    }
    Ok(cal.pixel_area_to_mm2(std::f64::consts::PI * radius * radius))
}

pub fn jeffries_multiplier(mode: MultiplierMode) -> Result<f64> {
    match mode {
        MultiplierMode::Dynamic { area_mm2 } if area_mm2 > 0.0 && area_mm2.is_finite() => {
            Ok(1.0 / area_mm2)
        }
        MultiplierMode::Magnification { m } if m > 0.0 && m.is_finite() => Ok(0.0002 * m * m),
        other => Err(Error::InvalidParameter(format!(
            "multiplier input must be positive: {other:?}"
        ))),
    }
}

/// Equivalent whole grains per mm².
pub fn grain_density(n_inside: usize, n_intercepted: usize, f: f64) -> f64 {
    f * (n_inside as f64 + n_intercepted as f64 / 2.0)
}

pub fn astm_g(n_a: f64) -> Result<f64> {
    if n_a > 0.0 && n_a.is_finite() {
        Ok(G_SLOPE * n_a.log10() - G_OFFSET)
    } else {
        Err(Error::NonPositiveDensity(n_a))
    }
}

/// Full measurement on one mask.
///
/// A supplied circle is used verbatim (e.g. one inscribed on a reference
/// mask); otherwise a circle is inscribed on `mask` itself.
pub fn analyze(
    mask: &LabelMask,
    cal: Calibration,
    target: usize,
    circle: Option<&TestCircle>,
) -> Result<JeffriesResult> {
    let (circle, extents) = match circle {
        Some(c) => {
            check_center(mask, c.center)?;
            (*c, radial_extents(mask, c.center))
        }
        None => {
            let center = Point::image_center(mask.width(), mask.height());
            check_center(mask, center)?;
            let extents = radial_extents(mask, center);
            let r = inscription_radius(&extents, target, center, mask.width(), mask.height())?;
            (TestCircle::new(center, r, cal)?, extents)
        }
    };
    Ok(measure(&extents, circle))
}

/// Counts and derived density for precomputed extents and a circle.
pub fn measure(extents: &[RadialExtent], circle: TestCircle) -> JeffriesResult {
    let cls = classify(extents, circle.radius);
    let f = 1.0 / circle.physical_area_mm2;
    let n_a = grain_density(cls.inside.len(), cls.intercepted.len(), f);
    JeffriesResult {
        n_inside: cls.inside.len(),
        n_intercepted: cls.intercepted.len(),
        f,
        n_a,
        g: astm_g(n_a).ok(),
        circle,
    }
}
