//! Experiment configuration file: one TOML document with a table per module.
//!
//! ```toml
//! backbone_seed = 0
//!
//! [encoder]
//! image_size = 32
//!
//! [prompts]
//! context_tokens = 4
//!
//! [train]
//! steps = 300
//!
//! [synth]
//! alpha = 0.8
//!
//! [data]
//! train_fraction = 0.8
//! ```
//!
//! Every key is optional and defaults to the toy configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clip::{ClassPromptSet, ClipModel, EncoderConfig};
use crate::datagen::SynthConfig;
use crate::error::{Error, Result};
use crate::prompt::{PromptConfig, PromptedModel};
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Manifest of an existing corpus; a synthetic corpus is used when absent.
    pub manifest: Option<PathBuf>,
    /// Class-prompt file; the built-in live/physical/digital set when absent.
    pub classes: Option<PathBuf>,
    pub train_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            classes: None,
            train_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seed of the frozen backbone, independent of the training seed.
    pub backbone_seed: u64,
    pub encoder: EncoderConfig,
    pub prompts: PromptConfig,
    pub train: TrainConfig,
    pub synth: SynthConfig,
    pub data: DataConfig,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.prompts.validate(&self.encoder)?;
        self.train.validate()?;
        self.synth.validate()?;
        if self.synth.image_size != self.encoder.image_size {
            return Err(Error::Config(format!(
                "synth.image_size {} differs from encoder.image_size {}",
                self.synth.image_size, self.encoder.image_size
            )));
        }
        if !(self.data.train_fraction > 0.0 && self.data.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "data.train_fraction {} outside (0, 1)",
                self.data.train_fraction
            )));
        }
        Ok(())
    }

    /// Prompt configuration with the ablation switches applied: SCPG off
    /// means no context tokens.
    pub fn effective_prompts(&self) -> PromptConfig {
        let mut p = self.prompts.clone();
        if !self.train.scpg_on {
            p.context_tokens = 0;
        }
        p
    }

    pub fn class_prompts(&self) -> Result<ClassPromptSet> {
        match &self.data.classes {
            Some(p) => ClassPromptSet::load(p),
            None => Ok(ClassPromptSet::default()),
        }
    }

    /// Fresh model: seeded frozen backbone, context bank and prompts seeded by `train.seed`.
    pub fn build_model(&self) -> Result<PromptedModel> {
        let classes = self.class_prompts()?;
        let clip = ClipModel::new(&self.encoder, &classes, self.backbone_seed)?;
        PromptedModel::new(clip, classes, self.effective_prompts(), self.train.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_toy_default() {
        assert_eq!(ExperimentConfig::parse("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn round_trip_and_partial_override() {
        let cfg = ExperimentConfig::parse("[train]\nsteps = 7\nscpg_on = false\n").unwrap();
        assert_eq!(cfg.train.steps, 7);
        assert_eq!(cfg.effective_prompts().context_tokens, 0);
        assert_eq!(ExperimentConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        assert!(matches!(ExperimentConfig::parse("[train]\nstep = 3\n"), Err(Error::Config(_))));
        assert!(matches!(
            ExperimentConfig::parse("[train]\nlearning_rate = 0.0\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            ExperimentConfig::parse("[synth]\nimage_size = 64\n"),
            Err(Error::Config(_))
        ));
    }
}
