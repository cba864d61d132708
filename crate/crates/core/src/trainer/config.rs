use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    /// Weight of the two consistency terms.
    pub lambda_cons: f64,
    /// Fraction of each batch eligible for hard-sample treatment.
    pub caa_quantile: f64,
    /// Loss weight of hard samples.
    pub caa_weight: f64,
    pub seed: u64,
    pub scpg_on: bool,
    pub caa_on: bool,
    /// Evaluate every this many steps (0: only after the last step).
    pub eval_every: usize,
    /// Operating threshold for ACC and ACER.
    pub threshold: f64,
}

/// Learning rate tuned for a pretrained full-scale backbone.
pub const PAPER_SCALE_LEARNING_RATE: f64 = 1e-6;

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            steps: 300,
            lambda_cons: 1.0,
            caa_quantile: 0.3,
            caa_weight: 2.0,
            seed: 0,
            scpg_on: true,
            caa_on: true,
            eval_every: 0,
            threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.caa_quantile) {
            return bad(format!("caa_quantile {} outside [0, 1)", self.caa_quantile));
        }
        if !(self.caa_weight >= 1.0 && self.caa_weight.is_finite()) {
            return bad(format!("caa_weight {} must be at least 1", self.caa_weight));
        }
        if !(self.lambda_cons >= 0.0 && self.lambda_cons.is_finite()) {
            return bad(format!("lambda_cons {} must be non-negative", self.lambda_cons));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(format!("threshold {} outside [0, 1]", self.threshold));
        }
        Ok(())
    }
}
