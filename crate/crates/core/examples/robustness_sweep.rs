//! Sweep the target grain count from 10 to 100 under both circle modes.
//!
//! `cargo run --release --example robustness_sweep [merge] [split]`

use grainsize::eval::{self, CircleMode, MaskPair};
use grainsize::synth::{self, Degradation, SynthSpec};
use grainsize::Calibration;

fn main() -> grainsize::Result<()> {
    let arg = |i: usize, default: f64| {
        std::env::args()
            .nth(i)
            .and_then(|s| s.parse().ok())
            .unwrap_or(default)
    };
    let d = |seed| Degradation {
        merge_fraction: arg(1, 0.1),
        split_fraction: arg(2, 0.0),
        rng_seed: seed,
    };
    let pairs: Vec<MaskPair> = (0..10u64)
        .map(|s| {
            let gt = synth::generate_voronoi(&SynthSpec::new(1024, 1024, 2000, 200 + s))?.labels;
            let pred = synth::degrade(&gt, &d(s))?;
            Ok(MaskPair {
                name: format!("f{s}"),
                gt,
                pred,
            })
        })
        .collect::<grainsize::Result<_>>()?;

    let targets: Vec<usize> = (1..=10).map(|i| i * 10).collect();
    let table = eval::robustness_sweep(&pairs, Calibration::default(), &targets, &CircleMode::ALL);
    println!("target  mode        N_A MAPE  G MAPE");
    for row in &table.rows {
        println!(
            "{:>6}  {:<10}  {:>7.2}%  {:>5.2}%",
            row.target,
            row.mode.as_str(),
            row.n_a_mape.unwrap_or(f64::NAN),
            row.g_mape.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
