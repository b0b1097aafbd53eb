//! Run configuration shared by all commands, loadable from JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{CircleMode, EvalOptions};
use crate::io::DEFAULT_MAX_SIDE;
use crate::jeffries::{ASTM_MIN_GRAINS, DEFAULT_TARGET_GRAINS};
use crate::mask::Calibration;
use crate::prep::PrepConfig;
use crate::stitch::StitchPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Pixels per micrometre.
    pub calibration: Calibration,
    pub target_grains: usize,
    pub circle_mode: CircleMode,
    pub prep: PrepConfig,
    pub stitch: StitchPlan,
    pub eval: EvalOptions,
    pub robustness_targets: Vec<usize>,
    /// Worker threads; `None` uses all cores.
    pub jobs: Option<usize>,
    pub format: OutputFormat,
    pub max_side: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            calibration: Calibration::default(),
            target_grains: DEFAULT_TARGET_GRAINS,
            circle_mode: CircleMode::GtDerived,
            prep: PrepConfig::default(),
            stitch: StitchPlan::default(),
            eval: EvalOptions::default(),
            robustness_targets: (1..=10).map(|i| i * 10).collect(),
            jobs: None,
            format: OutputFormat::Json,
            max_side: DEFAULT_MAX_SIDE,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_grains == 0 {
            return Err(Error::InvalidParameter("target_grains must be at least 1".into()));
        }
        if self.robustness_targets.contains(&0) {
            return Err(Error::InvalidParameter("robustness targets must be at least 1".into()));
        }
        if self.jobs == Some(0) {
            return Err(Error::InvalidParameter("jobs must be at least 1".into()));
        }
        self.prep.validate()
    }

    /// Warning attached to results when the target is below the standard minimum.
    pub fn astm_warning(&self) -> Option<String> {
        astm_warning(self.target_grains)
    }
}

pub fn astm_warning(target: usize) -> Option<String> {
    (target < ASTM_MIN_GRAINS).then(|| {
        format!("below {ASTM_MIN_GRAINS}-grain minimum (target {target})")
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_constants() {
        let c = RunConfig::default();
        assert_eq!(c.calibration.pixels_per_micron(), 2.26);
        assert_eq!(c.target_grains, 60);
        assert_eq!(c.prep.threshold, 128);
        assert_eq!(c.prep.min_area, 200);
        assert_eq!(c.prep.erosion_radius, 1);
        assert_eq!(c.stitch.rows * c.stitch.cols, 12);
        assert_eq!(c.robustness_targets, vec![10, 20, 30, 40, 50, 60, 70, 80, 90, 100]);
    }

    #[test]
    fn json_round_trip() {
        let c = RunConfig {
            target_grains: 80,
            circle_mode: CircleMode::GtFree,
            ..Default::default()
        };
        let back: RunConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"target_grains": 40, "prep": {"min_area": 50}}"#).unwrap();
        assert_eq!(c.target_grains, 40);
        assert_eq!(c.prep.min_area, 50);
        assert_eq!(c.prep.threshold, 128);
        assert!(c.astm_warning().is_some());
    }

    #[test]
    fn invalid_calibration_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"calibration": -1.0}"#).is_err());
    }
}
