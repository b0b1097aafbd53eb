//! Inscribe a test circle on a label mask and report the Jeffries count.
//!
//! `cargo run --example jeffries_basics`

use grainsize::jeffries::{self, MultiplierMode};
use grainsize::{Calibration, LabelMask};

fn main() -> grainsize::Result<()> {
    // 20×20 grid of 25×25 px grains.
    let mask = LabelMask::from_fn(500, 500, |x, y| (1 + (y / 25) * 20 + x / 25) as u16);
    let cal = Calibration::new(2.26)?;

    let r = jeffries::analyze(&mask, cal, 60, None)?;
    println!(
        "circle r = {:.1} px at ({:.1}, {:.1}), area {:.5} mm²",
        r.circle.radius, r.circle.center.x, r.circle.center.y, r.circle.physical_area_mm2
    );
    println!("inside {} / intercepted {}", r.n_inside, r.n_intercepted);
    println!("f = {:.2}/mm², N_A = {:.1}/mm², G = {:.2}", r.f, r.n_a, r.g.unwrap_or(f64::NAN));

    // Each grain is (25 / 2.26 µm)², so the true density is known.
    let truth = 1.0 / cal.pixel_area_to_mm2(625.0);
    println!("true density {truth:.1}/mm² (G = {:.2})", jeffries::astm_g(truth)?);

    // The fixed-magnification multiplier for comparison.
    let f100 = jeffries::jeffries_multiplier(MultiplierMode::Magnification { m: 100.0 })?;
    println!("standard multiplier at 100×: {f100}");
    Ok(())
}
