//! Model configuration: cluster count, outcome family, kernel choice,
//! priors, and the inference budget.

use serde::{Deserialize, Serialize};

use crate::data::OutcomeType;
use crate::error::{Error, Result};
use crate::gp::KernelKind;
use crate::model::PriorConfig;

fn default_kernel() -> KernelKind {
    KernelKind::SeArd
}
fn default_feature_selection() -> bool {
    true
}
fn default_restarts() -> usize {
    8
}
fn default_max_iters() -> usize {
    5000
}
fn default_mc_samples() -> usize {
    1
}
fn default_base_step() -> f64 {
    0.05
}
fn default_seed() -> u64 {
    0
}

/// Full fitting configuration. Serializable to/from JSON; unknown keys are
/// rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(alias = "K")]
    pub k: usize,
    pub outcome_type: OutcomeType,
    #[serde(default = "default_kernel")]
    pub kernel: KernelKind,
    #[serde(default = "default_feature_selection")]
    pub feature_selection: bool,
    #[serde(default)]
    pub priors: PriorConfig,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    #[serde(default = "default_base_step")]
    pub base_step: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(k: usize, outcome_type: OutcomeType) -> Self {
        Self {
            k,
            outcome_type,
            kernel: default_kernel(),
            feature_selection: default_feature_selection(),
            priors: PriorConfig::default(),
            restarts: default_restarts(),
            max_iters: default_max_iters(),
            mc_samples: default_mc_samples(),
            base_step: default_base_step(),
            seed: default_seed(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidValue("K must be at least 1".into()));
        }
        if self.restarts == 0 || self.max_iters == 0 || self.mc_samples == 0 {
            return Err(Error::InvalidValue(
                "restarts, max_iters, and mc_samples must be positive".into(),
            ));
        }
        if !(self.base_step > 0.0 && self.base_step.is_finite()) {
            return Err(Error::InvalidValue("base_step must be positive".into()));
        }
        self.outcome_type.validate()?;
        self.priors.validate(self.k)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ModelConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_and_defaults() {
        let text = r#"{"k": 3, "outcome_type": {"tag": "continuous"}}"#;
        let cfg = ModelConfig::from_json(text).unwrap();
        assert_eq!(cfg.k, 3);
        assert_eq!(cfg.restarts, 8);
        assert_eq!(cfg.max_iters, 5000);
        assert_eq!(cfg.mc_samples, 1);
        assert_eq!(cfg.base_step, 0.05);
        assert!(cfg.feature_selection);
        let back = ModelConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = r#"{"k": 2, "outcome_type": {"tag": "continuous"}, "bogus": 1}"#;
        assert!(ModelConfig::from_json(text).is_err());
    }

    #[test]
    fn binary_outcome_with_favorable_label() {
        let text = r#"{"k": 2, "outcome_type": {"tag": "binary", "favorable_label": 0}}"#;
        let cfg = ModelConfig::from_json(text).unwrap();
        assert!(cfg.outcome_type.is_binary());
    }

    #[test]
    fn zero_k_rejected() {
        let text = r#"{"k": 0, "outcome_type": {"tag": "continuous"}}"#;
        assert!(ModelConfig::from_json(text).is_err());
    }
}
