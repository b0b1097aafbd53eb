//! Write and read 16-bit label TIFFs, and inspect the instance index.
//!
//! `cargo run --example label_mask_io`

use grainsize::{io, LabelMask};

fn main() -> grainsize::Result<()> {
    let dir = tempfile::tempdir().map_err(|e| grainsize::Error::Serialize(e.to_string()))?;
    let path = dir.path().join("labels.tif");

    // IDs above 255 need the 16-bit container.
    let mask = LabelMask::from_fn(64, 32, |x, _| if x < 32 { 300 } else { 65535 });
    io::write_label_mask(&mask, &path)?;
    let back = io::read_label_mask(&path)?;
    assert_eq!(back, mask);

    for g in back.instances() {
        println!(
            "id {:>5}: {} px, bbox ({}, {})-({}, {})",
            g.id, g.area, g.bbox.min_x, g.bbox.min_y, g.bbox.max_x, g.bbox.max_y
        );
    }
    let relabeled = back.relabel_contiguous();
    println!("contiguous ids: {:?}", relabeled.instance_ids());
    Ok(())
}
