//! Measure a synthetic Voronoi field of known density and render an overlay.
//!
//! `cargo run --release --example analyze_synthetic [overlay.png]`

use grainsize::jeffries::{self, classify, radial_extents};
use grainsize::overlay::{self, OverlayStyle};
use grainsize::synth::{self, SynthSpec};
use grainsize::Calibration;

fn main() -> grainsize::Result<()> {
    let cal = Calibration::default();
    let mut spec = SynthSpec::new(1024, 1024, 2000, 11);
    spec.boundary_thickness = 2;
    let field = synth::generate_voronoi(&spec)?;

    println!("true density {:.1}/mm²", spec.true_density(cal));
    for target in [10, 30, 60, 100] {
        let r = jeffries::analyze(&field.labels, cal, target, None)?;
        println!(
            "target {target:>3}: r {:>6.1} px, inside {:>3}, intercepted {:>3}, N_A {:>8.1}, G {:.2}",
            r.circle.radius,
            r.n_inside,
            r.n_intercepted,
            r.n_a,
            r.g.unwrap_or(f64::NAN)
        );
    }

    if let Some(path) = std::env::args_os().nth(1) {
        let r = jeffries::analyze(&field.labels, cal, 60, None)?;
        let cls = classify(&radial_extents(&field.labels, r.circle.center), r.circle.radius);
        overlay::render_overlay(Some(&field.edges), &field.labels, &r.circle, &cls, &OverlayStyle::default(), &path)?;
        println!("overlay written to {}", path.to_string_lossy());
    }
    Ok(())
}
