//! Argument parsing and exit-status policy for the `grainsize` binary.
//!
//! Exit status: 0 success, 1 partial or module failure, 2 invalid invocation.
//! Flags override values loaded with `--config`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::commands;
use crate::config::{OutputFormat, RunConfig};
use crate::error::Error;
use crate::eval::CircleMode;
use crate::mask::Calibration;
use crate::stitch::MaskKind;
use crate::synth::{Degradation, SynthSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "grainsize", version, about = "Jeffries planimetric grain size from label masks")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run configuration; flags take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Pixels per micrometre.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub calibration: Option<f64>,
    /// Grains the test circle must fully contain.
    #[arg(long, global = true)]
    pub target: Option<usize>,
    /// Circle for the prediction: `gt-derived` reuses the ground-truth circle,
    /// `gt-free` inscribes its own.
    #[arg(long, global = true, value_parser = parse_mode)]
    pub mode: Option<CircleMode>,
    /// Directory for classification overlay PNGs (analyze).
    #[arg(long, global = true, value_name = "DIR")]
    pub overlay_dir: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Report format for analyze, evaluate and robustness.
    #[arg(long, global = true, value_enum)]
    pub format: Option<OutputFormat>,
    /// Print the effective configuration as JSON and exit.
    #[arg(long, global = true)]
    pub dump_config: bool,
}

fn parse_mode(s: &str) -> Result<CircleMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reassemble patch grids into full micrographs and masks.
    Stitch {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        rows: Option<u32>,
        #[arg(long)]
        cols: Option<u32>,
        #[arg(long)]
        pattern: Option<String>,
        #[arg(long)]
        mask_pattern: Option<String>,
        /// `raw` copies mask patches verbatim; `labels` unifies IDs across seams.
        #[arg(long, value_parser = parse_mask_kind)]
        mask_kind: Option<MaskKind>,
    },
    /// Convert 8-bit edge masks into 16-bit label TIFFs.
    Prep {
        /// Files or directories.
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        threshold: Option<u8>,
        #[arg(long)]
        min_area: Option<usize>,
        #[arg(long)]
        erosion_radius: Option<u32>,
    },
    /// Measure label masks with a self-inscribed test circle.
    Analyze {
        /// Label mask files or directories.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Grayscale micrographs (matched by file stem) used as overlay base.
        #[arg(long, value_name = "DIR")]
        micrograph_dir: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        report: Option<PathBuf>,
    },
    /// Compare predicted label masks against ground truth.
    Evaluate {
        #[arg(long, value_name = "DIR")]
        gt: PathBuf,
        #[arg(long, value_name = "DIR")]
        pred: PathBuf,
        #[arg(long, value_name = "PATH")]
        report: Option<PathBuf>,
    },
    /// Sweep target grain counts under both circle modes.
    Robustness {
        #[arg(long, value_name = "DIR")]
        gt: PathBuf,
        #[arg(long, value_name = "DIR")]
        pred: PathBuf,
        /// Comma-separated targets.
        #[arg(long, value_delimiter = ',')]
        targets: Option<Vec<usize>>,
        #[arg(long, value_name = "PATH")]
        report: Option<PathBuf>,
    },
    /// Generate a synthetic Voronoi field with known density.
    Synth {
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        seeds: usize,
        /// Square side; overridden by --width/--height.
        #[arg(long, default_value_t = 1024)]
        size: u32,
        #[arg(long)]
        width: Option<u32>,
        #[arg(long)]
        height: Option<u32>,
        #[arg(long, default_value_t = 0)]
        rng_seed: u64,
        #[arg(long, default_value_t = 0)]
        boundary_thickness: u32,
        /// Also write a degraded prediction with this merge fraction.
        #[arg(long)]
        merge_fraction: Option<f64>,
        #[arg(long)]
        split_fraction: Option<f64>,
        #[arg(long, default_value = "synth")]
        name: String,
    },
}

fn parse_mask_kind(s: &str) -> Result<MaskKind, String> {
    match s {
        "raw" => Ok(MaskKind::Raw),
        "labels" => Ok(MaskKind::Labels),
        _ => Err(format!("expected raw or labels, got {s:?}")),
    }
}

/// Loads the configuration file (if any) and applies flag overrides.
pub fn effective_config(global: &GlobalArgs, command: Option<&Command>) -> Result<RunConfig, Error> {
    let mut cfg = match &global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(c) = global.calibration {
        cfg.calibration = Calibration::new(c)?;
    }
    if let Some(t) = global.target {
        cfg.target_grains = t;
    }
    if let Some(m) = global.mode {
        cfg.circle_mode = m;
    }
    if let Some(j) = global.jobs {
        cfg.jobs = Some(j);
    }
    if let Some(f) = global.format {
        cfg.format = f;
    }
    match command {
        Some(Command::Stitch {
            rows,
            cols,
            pattern,
            mask_pattern,
            mask_kind,
            ..
        }) => {
            let s = &mut cfg.stitch;
            s.rows = rows.unwrap_or(s.rows);
            s.cols = cols.unwrap_or(s.cols);
            if let Some(p) = pattern {
                s.filename_pattern = p.clone();
            }
            if mask_pattern.is_some() {
                s.mask_pattern = mask_pattern.clone();
            }
            s.mask_kind = mask_kind.unwrap_or(s.mask_kind);
        }
        Some(Command::Prep {
            threshold,
            min_area,
            erosion_radius,
            ..
        }) => {
            let p = &mut cfg.prep;
            p.threshold = threshold.unwrap_or(p.threshold);
            p.min_area = min_area.unwrap_or(p.min_area);
            p.erosion_radius = erosion_radius.unwrap_or(p.erosion_radius);
        }
        Some(Command::Robustness {
            targets: Some(t), ..
        }) => cfg.robustness_targets = t.clone(),
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parses `args` (including the program name) and runs the command, writing
/// reports to `out`. Returns the process exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let cfg = match effective_config(&cli.global, cli.command.as_ref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    if cli.global.dump_config {
        return emit(out, None, &cfg.to_json(), EXIT_OK);
    }
    let Some(command) = cli.command else {
        eprintln!("error: a subcommand is required (see --help)");
        return EXIT_USAGE;
    };
    match dispatch(command, &cli.global, &cfg, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::InvalidParameter(_) | Error::Pattern(_) => EXIT_USAGE,
        _ => EXIT_PARTIAL,
    }
}

fn emit(out: &mut dyn Write, report: Option<&Path>, text: &str, code: i32) -> i32 {
    if let Some(p) = report {
        if let Err(e) = crate::io::write_text(p, text) {
            eprintln!("error: {e}");
            return EXIT_PARTIAL;
        }
    }
    if writeln!(out, "{}", text.trim_end()).is_err() {
        return EXIT_PARTIAL;
    }
    code
}

fn dispatch(
    command: Command,
    global: &GlobalArgs,
    cfg: &RunConfig,
    out: &mut dyn Write,
) -> Result<i32, Error> {
    match command {
        Command::Stitch { input, output, .. } => {
            let s = commands::cmd_stitch(&input, &output, cfg)?;
            let code = if s.failures.is_empty() { EXIT_OK } else { EXIT_PARTIAL };
            Ok(emit(out, None, &commands::render_json(&s)?, code))
        }
        Command::Prep { input, output, .. } => {
            let s = commands::cmd_prep(&input, &output, cfg)?;
            let code = if s.failures.is_empty() { EXIT_OK } else { EXIT_PARTIAL };
            Ok(emit(out, None, &commands::render_json(&s)?, code))
        }
        Command::Analyze {
            inputs,
            micrograph_dir,
            report,
        } => {
            let r = commands::cmd_analyze(
                &inputs,
                cfg,
                global.overlay_dir.as_deref(),
                micrograph_dir.as_deref(),
            )?;
            for rec in r.records.iter().filter(|r| r.error.is_some()) {
                log::warn!("{}: {}", rec.image, rec.error.as_deref().unwrap_or_default());
            }
            let all_failed = !r.records.is_empty() && r.failed() == r.records.len();
            let code = if all_failed { EXIT_PARTIAL } else { EXIT_OK };
            let text = commands::render_analyze(&r, cfg.format)?;
            Ok(emit(out, report.as_deref(), &text, code))
        }
        Command::Evaluate { gt, pred, report } => {
            let r = commands::cmd_evaluate(&gt, &pred, cfg)?;
            let failed = !r.report.failures.is_empty() || !r.load_failures.is_empty();
            let code = if failed { EXIT_PARTIAL } else { EXIT_OK };
            let text = commands::render_evaluate(&r, cfg.format)?;
            Ok(emit(out, report.as_deref(), &text, code))
        }
        Command::Robustness {
            gt, pred, report, ..
        } => {
            let r = commands::cmd_robustness(&gt, &pred, cfg)?;
            let code = if r.load_failures.is_empty() { EXIT_OK } else { EXIT_PARTIAL };
            let text = commands::render_robustness(&r, cfg.format)?;
            Ok(emit(out, report.as_deref(), &text, code))
        }
        Command::Synth {
            output,
            seeds,
            size,
            width,
            height,
            rng_seed,
            boundary_thickness,
            merge_fraction,
            split_fraction,
            name,
        } => {
            let mut spec = SynthSpec::new(
                width.unwrap_or(size),
                height.unwrap_or(size),
                seeds,
                rng_seed,
            );
            spec.boundary_thickness = boundary_thickness;
            if merge_fraction.is_some() || split_fraction.is_some() {
                spec.degradation = Some(Degradation {
                    merge_fraction: merge_fraction.unwrap_or(0.0),
                    split_fraction: split_fraction.unwrap_or(0.0),
                    rng_seed: rng_seed.wrapping_add(1),
                });
            }
            spec.validate()?;
            let m = commands::cmd_synth(&output, &name, &spec, cfg.calibration)?;
            Ok(emit(out, None, &commands::render_json(&m)?, EXIT_OK))
        }
    }
}
