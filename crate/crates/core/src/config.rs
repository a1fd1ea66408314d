//! Run configuration: every module's parameter block with defaults
//! pre-filled, loadable from a JSON file. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::fusion::FusionParams;
use crate::offline::{PathParams, TrimParams};
use crate::online::OnlineParams;
use crate::sim::{NoiseModel, ScenarioConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HorizonConfig {
    /// Frames of tube tail used for extrapolation velocity.
    pub velocity_window: usize,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        HorizonConfig { velocity_window: 5 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub fusion: FusionParams,
    pub paths: PathParams,
    pub trim: TrimParams,
    pub online: OnlineParams,
    pub horizon: HorizonConfig,
    pub eval: EvalConfig,
    pub scenario: ScenarioConfig,
    pub noise: NoiseModel,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.display().to_string(),
            line: e.line(),
            msg: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !in_unit(self.fusion.tau) || !in_unit(self.fusion.mean_match_iou) {
            return Err(Error::InvalidParam("fusion thresholds must be in [0, 1]".into()));
        }
        if self.paths.lambda_o < 0.0 || self.trim.alpha_c < 0.0 {
            return Err(Error::InvalidParam(
                "lambda_o and alpha_c must be >= 0".into(),
            ));
        }
        self.online.validate()?;
        if self.horizon.velocity_window < 1 {
            return Err(Error::InvalidParam("velocity_window must be >= 1".into()));
        }
        for d in self.eval.delta_sweep.iter().chain([&self.eval.delta]) {
            if !(*d > 0.0 && *d <= 1.0) {
                return Err(Error::InvalidParam("eval thresholds must be in (0, 1]".into()));
            }
        }
        for f in &self.eval.fractions {
            if !(*f > 0.0 && *f <= 1.0) {
                return Err(Error::InvalidParam("fractions must be in (0, 1]".into()));
            }
        }
        self.scenario.validate()?;
        self.noise.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_documented_values() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.fusion.tau, 0.3);
        assert_eq!(cfg.paths.lambda_o, 1.0);
        assert_eq!(cfg.trim.lambda_l, 1.0);
        assert_eq!(cfg.online.iou_gate, 0.1);
        assert_eq!(cfg.online.top_n, 10);
        assert_eq!(cfg.online.max_misses, 5);
        assert_eq!(cfg.online.lookback, 5);
        assert_eq!(cfg.online.nms_threshold, 0.45);
        assert_eq!(cfg.horizon.velocity_window, 5);
        assert_eq!(cfg.eval.delta_sweep.len(), 10);
        assert_eq!(cfg.eval.fractions.len(), 10);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"bogus": 1}"#);
        assert!(err.is_err());
    }

    #[test]
    fn json_roundtrip() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back.online.top_n, cfg.online.top_n);
        assert_eq!(back.eval.delta_sweep, cfg.eval.delta_sweep);
    }
}
