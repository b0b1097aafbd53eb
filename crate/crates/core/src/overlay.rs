//! Classification overlays: inside grains, intercepted grains and the test circle.

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jeffries::{Classification, GrainClass, TestCircle};
use crate::mask::LabelMask;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlayStyle {
    pub inside_color: [u8; 3],
    pub intercepted_color: [u8; 3],
    pub circle_color: [u8; 3],
    pub circle_thickness: u32,
}

impl Default for OverlayStyle {
    fn default() -> Self {
        Self {
            inside_color: [0, 200, 0],
            intercepted_color: [255, 215, 0],
            circle_color: [255, 0, 0],
            circle_thickness: 2,
        }
    }
}

/// Base layer when no micrograph is supplied: grains light gray, background black.
const GRAIN_GRAY: u8 = 160;

/// Renders the overlay in memory.
///
/// With a micrograph, tints are blended at 50 %; without one they are solid.
pub fn overlay_image(
    micrograph: Option<&GrayImage>,
    mask: &LabelMask,
    circle: &TestCircle,
    classification: &Classification,
    style: &OverlayStyle,
) -> Result<RgbImage> {
    if style.circle_thickness == 0 {
        return Err(Error::InvalidParameter("circle thickness must be at least 1".into()));
    }
    let (w, h) = mask.dimensions();
    if let Some(m) = micrograph {
        if m.dimensions() != (w, h) {
            return Err(Error::DimensionMismatch {
                left: m.dimensions(),
                right: (w, h),
            });
        }
    }
    let c = circle.center;
    let r = circle.radius;
    let fits = r > 0.0
        && c.x - r >= 0.0
        && c.y - r >= 0.0
        && c.x + r <= f64::from(w) - 1.0
        && c.y + r <= f64::from(h) - 1.0;
    if !fits {
        return Err(Error::OutsideImage {
            x: c.x,
            y: c.y,
            width: w,
            height: h,
        });
    }

    // Resolve each ID once.
    let mut class = vec![None; usize::from(mask.max_id()) + 1];
    for id in mask.instance_ids() {
        class[usize::from(id)] = Some(
            classification
                .class_of(id)
                .ok_or(Error::MissingClassification(id))?,
        );
    }

    let half = f64::from(style.circle_thickness) / 2.0;
    let mut out = RgbImage::new(w, h);
    for (x, y, px) in out.enumerate_pixels_mut() {
        let id = mask.get(x, y);
        let base = match micrograph {
            Some(m) => m.get_pixel(x, y).0[0],
            None if id != 0 => GRAIN_GRAY,
            None => 0,
        };
        let tint = match class[usize::from(id)] {
            Some(GrainClass::Inside) => Some(style.inside_color),
            Some(GrainClass::Intercepted) => Some(style.intercepted_color),
            _ => None,
        };
        let mut rgb = [base; 3];
        if let Some(t) = tint {
            if micrograph.is_some() {
                for k in 0..3 {
                    rgb[k] = (u16::from(rgb[k]) + u16::from(t[k])).div_ceil(2) as u8;
                }
            } else {
                rgb = t;
            }
        }
        let d = ((f64::from(x) - c.x).powi(2) + (f64::from(y) - c.y).powi(2)).sqrt();
        if (d - r).abs() <= half {
            rgb = style.circle_color;
        }
        *px = Rgb(rgb);
    }
    Ok(out)
}

/// Renders the overlay and writes it as an 8-bit RGB PNG.
pub fn render_overlay(
    micrograph: Option<&GrayImage>,
    mask: &LabelMask,
    circle: &TestCircle,
    classification: &Classification,
    style: &OverlayStyle,
    path: impl AsRef<Path>,
) -> Result<()> {
    let img = overlay_image(micrograph, mask, circle, classification, style)?;
    crate::io::write_image(&DynamicImage::ImageRgb8(img), path, ImageFormat::Png)
}
