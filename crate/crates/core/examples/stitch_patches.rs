//! Reassemble a 3×4 patch grid from files, including a label-mask grid whose
//! grains cross patch seams.
//!
//! `cargo run --example stitch_patches`

use grainsize::stitch::{self, MaskKind, PatchCoordinate, StitchPlan};
use grainsize::{io, LabelMask};
use image::{GrayImage, Luma};

fn main() -> grainsize::Result<()> {
    let plan = StitchPlan {
        mask_pattern: Some(stitch::DEFAULT_MASK_PATTERN.to_string()),
        mask_kind: MaskKind::Labels,
        ..StitchPlan::default()
    };
    let dir = tempfile::tempdir().map_err(|e| grainsize::Error::Serialize(e.to_string()))?;
    let (input, output) = (dir.path().join("patches"), dir.path().join("stitched"));
    std::fs::create_dir_all(&input).map_err(|e| grainsize::Error::Serialize(e.to_string()))?;

    // One full field, cut into patches named `<group>_r<row>_c<col>`.
    let (w, h) = (400, 300);
    let micro = GrayImage::from_fn(w, h, |x, y| Luma([((x + y) % 256) as u8]));
    // 1-px background lines at 25 mod 50, so every seam (multiples of 100)
    // cuts through a row or column of grains.
    let labels = LabelMask::from_fn(w, h, |x, y| {
        if x % 50 == 25 || y % 50 == 25 {
            0
        } else {
            (1 + ((y + 25) / 50) * 9 + (x + 25) / 50) as u16
        }
    })
    .relabel_contiguous();
    let (pw, ph) = (w / plan.cols, h / plan.rows);
    for r in 0..plan.rows {
        for c in 0..plan.cols {
            let tile = image::imageops::crop_imm(&micro, c * pw, r * ph, pw, ph).to_image();
            io::write_image(&tile.into(), input.join(format!("steel_r{r}_c{c}.png")), image::ImageFormat::Png)?;
            let m = LabelMask::from_fn(pw, ph, |x, y| labels.get(c * pw + x, r * ph + y));
            io::write_label_mask(&m.relabel_contiguous(), input.join(format!("steel_r{r}_c{c}_mask.tif")))?;
        }
    }
    // An incomplete group is skipped, not fatal.
    io::write_image(&micro.clone().into(), input.join("partial_r0_c0.png"), image::ImageFormat::Png)?;

    let summary = stitch::stitch_dataset(&input, &plan, &output)?;
    println!("{}", serde_json::to_string_pretty(&summary).unwrap());

    let stitched = io::read_label_mask(output.join("steel_mask.tif"))?;
    println!(
        "grains: original {}, stitched {}",
        labels.instance_count(),
        stitched.instance_count()
    );

    // Coordinates are parsed with the configured pattern.
    let re = stitch::compile_pattern(&plan.filename_pattern)?;
    let c: PatchCoordinate = stitch::parse_coordinate("steel_r2_c3.png", &re, plan.rows, plan.cols)?;
    println!("parsed {c:?}");
    Ok(())
}
