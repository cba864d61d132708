//! Class names, the zero-shot template and per-class descriptions.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPrompt {
    pub name: String,
    pub descriptions: Vec<String>,
}

/// Class-prompt file contents. On disk this is TOML:
///
/// ```toml
/// template = "a photo of a {}"
///
/// [[class]]
/// name = "real face"
/// descriptions = ["real face", "live bona fide face"]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPromptSet {
    pub template: String,
    #[serde(rename = "class")]
    pub classes: Vec<ClassPrompt>,
}

pub const LIVE_CLASS: &str = "real face";
pub const PHYSICAL_CLASS: &str = "physical attack";
pub const DIGITAL_CLASS: &str = "digital attack";

impl Default for ClassPromptSet {
    /// Live faces plus the physical and digital attack families, each with
    /// four descriptions at different granularity.
    fn default() -> Self {
        let class = |name: &str, d: [&str; 4]| ClassPrompt {
            name: name.into(),
            descriptions: d.iter().map(|s| s.to_string()).collect(),
        };
        Self {
            template: "a photo of a {}".into(),
            classes: vec![
                class(
                    LIVE_CLASS,
                    [
                        "real face",
                        "live bona fide face",
                        "genuine face with natural skin texture",
                        "live person in front of the camera",
                    ],
                ),
                class(
                    PHYSICAL_CLASS,
                    [
                        "printed photo attack",
                        "screen replay attack with moire pattern",
                        "3d mask attack",
                        "paper cutout attack",
                    ],
                ),
                class(
                    DIGITAL_CLASS,
                    [
                        "deepfake face swap",
                        "attribute edit forgery",
                        "synthetic generated face",
                        "face with blended forgery boundary",
                    ],
                ),
            ],
        }
    }
}

impl ClassPromptSet {
    pub fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 {
            return Err(Error::Input("need at least two classes".into()));
        }
        if !self.template.contains("{}") {
            return Err(Error::Input(format!("template {:?} has no {{}} slot", self.template)));
        }
        for c in &self.classes {
            if c.name.trim().is_empty() {
                return Err(Error::Input("class with empty name".into()));
            }
            if c.descriptions.is_empty() || c.descriptions.iter().any(|d| d.trim().is_empty()) {
                return Err(Error::Input(format!("class {:?} needs non-empty descriptions", c.name)));
            }
        }
        Ok(())
    }

    pub fn fill(&self, text: &str) -> String {
        self.template.replacen("{}", text, 1)
    }

    /// Every text the tokenizer may see, for building a closed vocabulary.
    pub fn all_texts(&self) -> Vec<String> {
        let mut out = vec![self.template.replace("{}", " ")];
        for c in &self.classes {
            out.push(c.name.clone());
            out.extend(c.descriptions.iter().cloned());
        }
        out
    }

    pub fn class(&self, name: &str) -> Option<&ClassPrompt> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let set: Self = toml::from_str(text).map_err(|e| Error::Input(format!("class-prompt file: {e}")))?;
        set.validate()?;
        Ok(set)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("prompt set serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Format {
            path: path.into(),
            msg: e.to_string(),
        })
    }
}
