//! Reading and writing label masks and grayscale images.
//!
//! TIFF (uncompressed, deflate, strip or tiled) and PNG are accepted on input;
//! label masks are always written as single-channel 16-bit TIFF.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageBuffer, ImageFormat, Luma};

use crate::error::{Error, Result};
use crate::mask::LabelMask;

/// Default per-side dimension cap applied when reading.
pub const DEFAULT_MAX_SIDE: u32 = 1 << 14;

#[derive(Debug, Clone, Copy)]
pub struct ReadOptions {
    pub max_side: u32,
}

impl Default for ReadOptions {
    fn default() -> Self {
        Self {
            max_side: DEFAULT_MAX_SIDE,
        }
    }
}

pub fn read_label_mask(path: impl AsRef<Path>) -> Result<LabelMask> {
    read_label_mask_with(path, ReadOptions::default())
}

/// Reads a single-channel 8/16-bit mask; 8-bit samples are widened losslessly.
pub fn read_label_mask_with(path: impl AsRef<Path>, opts: ReadOptions) -> Result<LabelMask> {
    let path = path.as_ref();
    let img = open_capped(path, opts)?;
    let (w, h) = (img.width(), img.height());
    match img {
        DynamicImage::ImageLuma16(buf) => LabelMask::new(w, h, buf.into_raw()),
        DynamicImage::ImageLuma8(buf) => {
            LabelMask::new(w, h, buf.into_raw().into_iter().map(u16::from).collect())
        }
        other => Err(Error::UnsupportedLayout {
            path: path.to_path_buf(),
            layout: format!("{:?}", other.color()),
        }),
    }
}

/// Reads an 8-bit grayscale image. Color 8-bit images are reduced to luma;
/// 16-bit and float images are rejected.
pub fn read_gray8(path: impl AsRef<Path>) -> Result<GrayImage> {
    read_gray8_with(path, ReadOptions::default())
}

pub fn read_gray8_with(path: impl AsRef<Path>, opts: ReadOptions) -> Result<GrayImage> {
    let path = path.as_ref();
    let img = open_capped(path, opts)?;
    match img {
        DynamicImage::ImageLuma8(buf) => Ok(buf),
        img @ (DynamicImage::ImageLumaA8(_)
        | DynamicImage::ImageRgb8(_)
        | DynamicImage::ImageRgba8(_)) => Ok(img.to_luma8()),
        other => Err(Error::UnsupportedLayout {
            path: path.to_path_buf(),
            layout: format!("{:?}", other.color()),
        }),
    }
}

/// Opens any supported image after checking the header against the cap.
pub fn read_image(path: impl AsRef<Path>) -> Result<DynamicImage> {
    open_capped(path.as_ref(), ReadOptions::default())
}

fn open_capped(path: &Path, opts: ReadOptions) -> Result<DynamicImage> {
    let (width, height) = image::image_dimensions(path).map_err(|e| Error::image(path, e))?;
    if width > opts.max_side || height > opts.max_side {
        return Err(Error::DimensionCap {
            path: path.to_path_buf(),
            width,
            height,
            cap: opts.max_side,
        });
    }
    image::open(path).map_err(|e| Error::image(path, e))
}

/// Writes `mask` as a 16-bit single-channel TIFF, replacing `path` atomically.
pub fn write_label_mask(mask: &LabelMask, path: impl AsRef<Path>) -> Result<()> {
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(mask.width(), mask.height(), mask.labels().to_vec())
            .expect("LabelMask upholds width*height == labels.len()");
    write_image(&DynamicImage::ImageLuma16(buf), path, ImageFormat::Tiff)
}

/// Encodes `img` in `format` and renames it into place.
pub fn write_image(img: &DynamicImage, path: impl AsRef<Path>, format: ImageFormat) -> Result<()> {
    let path = path.as_ref();
    atomic_write(path, |file| {
        let mut w = BufWriter::new(file);
        img.write_to(&mut w, format).map_err(|e| Error::image(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    })
}

/// Writes through a temporary file in the destination directory, then renames.
pub fn atomic_write(
    path: &Path,
    write: impl FnOnce(&mut fs::File) -> Result<()>,
) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    write(tmp.as_file_mut())?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    atomic_write(path, |f| {
        f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
    })
}
