//! Turn an edge-style annotation (255 boundaries, 0 interiors) into a label mask.
//!
//! `cargo run --example prep_edge_mask [edges.png]`

use grainsize::prep::{self, PrepConfig};
use image::{GrayImage, Luma};

fn main() -> grainsize::Result<()> {
    let edges = match std::env::args_os().nth(1) {
        Some(p) => grainsize::io::read_gray8(p)?,
        None => {
            // Columns 30, 14, 40 and 27 px wide, plus a 3-px sliver that
            // erodes to a 1-px line and falls under the area filter.
            GrayImage::from_fn(120, 90, |x, y| {
                let edge = [0, 31, 46, 87, 91, 119].contains(&x) || y % 30 == 0;
                Luma([if edge { 255 } else { 0 }])
            })
        }
    };

    let cfg = PrepConfig::default();
    let interiors = prep::binarize_interiors(&edges, cfg.threshold);
    let eroded = prep::erode(&interiors, cfg.erosion_radius);
    let components = prep::label_components(&eroded, cfg.connectivity)?;
    println!(
        "interior px {} -> eroded {} -> {} components",
        interiors.count_ones(),
        eroded.count_ones(),
        components.instance_count()
    );

    let labels = prep::prepare_mask(&edges, &cfg)?;
    for g in labels.instances() {
        println!("grain {}: {} px", g.id, g.area);
    }
    println!("{} grains kept (min area {})", labels.instance_count(), cfg.min_area);
    Ok(())
}
