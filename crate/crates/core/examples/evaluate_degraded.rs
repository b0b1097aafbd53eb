//! Score merge/split-degraded predictions against their ground truth.
//!
//! `cargo run --release --example evaluate_degraded`

use grainsize::eval::{self, CircleMode, EvalOptions, MaskPair};
use grainsize::synth::{self, Degradation, SynthSpec};
use grainsize::Calibration;

fn main() -> grainsize::Result<()> {
    let mut pairs = Vec::new();
    for (k, (merge, split)) in [(0.0, 0.0), (0.1, 0.0), (0.0, 0.1), (0.1, 0.1)].into_iter().enumerate() {
        let gt = synth::generate_voronoi(&SynthSpec::new(768, 768, 1200, 30 + k as u64))?.labels;
        let pred = synth::degrade(
            &gt,
            &Degradation {
                merge_fraction: merge,
                split_fraction: split,
                rng_seed: k as u64,
            },
        )?;
        pairs.push(MaskPair {
            name: format!("merge{merge}_split{split}"),
            gt,
            pred,
        });
    }

    let opts = EvalOptions::default();
    for mode in CircleMode::ALL {
        let report = eval::evaluate_dataset(&pairs, Calibration::default(), 60, mode, &opts);
        println!("mode {}", mode.as_str());
        for r in &report.records {
            println!(
                "  {:<20} AP50 {:.3} mAP {:.3} BF1 {:.3} count {:+4} N_A MAPE {:>5.2}% G MAPE {:>5.2}%",
                r.image,
                r.ap50,
                r.map_50_95,
                r.boundary_f1,
                r.count_error,
                r.errors.n_a_mape.unwrap_or(f64::NAN),
                r.errors.g_mape.unwrap_or(f64::NAN)
            );
        }
    }
    Ok(())
}
