//! Physical and digital prompt branches.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::clip::prompts::{DIGITAL_CLASS, LIVE_CLASS, PHYSICAL_CLASS};
use crate::clip::EncoderConfig;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Physical,
    Digital,
}

impl Branch {
    pub const ALL: [Branch; 2] = [Branch::Physical, Branch::Digital];

    pub fn name(self) -> &'static str {
        match self {
            Branch::Physical => "physical",
            Branch::Digital => "digital",
        }
    }

    pub fn attack_class(self) -> &'static str {
        match self {
            Branch::Physical => PHYSICAL_CLASS,
            Branch::Digital => DIGITAL_CLASS,
        }
    }

    /// `[live, attack]`; index 0 is always the live class.
    pub fn class_names(self) -> [&'static str; 2] {
        [LIVE_CLASS, self.attack_class()]
    }

    pub fn other(self) -> Branch {
        match self {
            Branch::Physical => Branch::Digital,
            Branch::Digital => Branch::Physical,
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Branch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "physical" => Ok(Branch::Physical),
            "digital" => Ok(Branch::Digital),
            other => Err(Error::Input(format!("unknown branch {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    /// Number of cluster-derived context tokens `K`; 0 disables context.
    pub context_tokens: usize,
    pub text_prompts: usize,
    pub visual_prompts: usize,
    /// Leading blocks that receive fresh prompts; `None` means every block.
    pub depth: Option<usize>,
    /// Std of the prompt tokens and of both context projections.
    pub init_std: f64,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            context_tokens: 4,
            text_prompts: 4,
            visual_prompts: 4,
            depth: None,
            init_std: 0.02,
        }
    }
}

impl PromptConfig {
    /// No context and no prompts: the prompted pipeline reduces to the vanilla one.
    pub fn empty() -> Self {
        Self {
            context_tokens: 0,
            text_prompts: 0,
            visual_prompts: 0,
            ..Self::default()
        }
    }

    pub fn resolved_depth(&self, enc: &EncoderConfig) -> usize {
        self.depth.unwrap_or(enc.depth)
    }

    pub fn validate(&self, enc: &EncoderConfig) -> Result<()> {
        let d = self.resolved_depth(enc);
        if d > enc.depth {
            return Err(Error::Config(format!("prompt depth {d} exceeds encoder depth {}", enc.depth)));
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return Err(Error::Config(format!("init_std {} must be finite and non-negative", self.init_std)));
        }
        Ok(())
    }
}

/// Learnable prompts of one branch. Storage is owned, never shared between branches.
#[derive(Debug, Clone)]
pub struct PromptBundle {
    pub branch: Branch,
    pub depth: usize,
    /// `[D, M_t, text_width]`
    pub text: Option<Tensor>,
    /// `[D, M_v, vision_width]`
    pub vision: Option<Tensor>,
}

/// Prompt bundle placed on a graph.
#[derive(Debug, Clone, Copy)]
pub struct BoundBundle {
    pub text: Option<Var>,
    pub vision: Option<Var>,
}

impl PromptBundle {
    pub fn init(branch: Branch, cfg: &PromptConfig, enc: &EncoderConfig, seed: u64) -> Result<Self> {
        cfg.validate(enc)?;
        let depth = cfg.resolved_depth(enc);
        let stream = match branch {
            Branch::Physical => 0x9e11,
            Branch::Digital => 0xd161,
        };
        let mut rng = Rng::new(seed).derive(stream);
        let mut table = |m: usize, w: usize| {
            (m > 0 && depth > 0).then(|| Tensor::trunc_normal(&[depth, m, w], cfg.init_std, &mut rng))
        };
        let text = table(cfg.text_prompts, enc.text_width);
        let vision = table(cfg.visual_prompts, enc.vision_width);
        Ok(Self {
            branch,
            depth,
            text,
            vision,
        })
    }

    pub fn text_len(&self) -> usize {
        self.text.as_ref().map_or(0, |t| t.shape()[1])
    }

    pub fn vision_len(&self) -> usize {
        self.vision.as_ref().map_or(0, |t| t.shape()[1])
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> BoundBundle {
        BoundBundle {
            text: self.text.as_ref().map(|t| g.leaf(t.clone(), trainable)),
            vision: self.vision.as_ref().map(|t| g.leaf(t.clone(), trainable)),
        }
    }

    pub fn prefix(&self) -> String {
        format!("prompts.{}.", self.branch)
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let p = self.prefix();
        let mut out = Vec::new();
        if let Some(t) = &self.text {
            out.push((format!("{p}text"), t));
        }
        if let Some(t) = &self.vision {
            out.push((format!("{p}vision"), t));
        }
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let p = self.prefix();
        let mut out = Vec::new();
        if let Some(t) = &mut self.text {
            out.push((format!("{p}text"), t));
        }
        if let Some(t) = &mut self.vision {
            out.push((format!("{p}vision"), t));
        }
        out
    }
}

/// Unified live score: the smaller of the two branch live probabilities.
pub fn fuse_branches(p_phys: f64, p_dig: f64) -> Result<f64> {
    for (name, p) in [("physical", p_phys), ("digital", p_dig)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Input(format!("{name} live probability {p} outside [0, 1]")));
        }
    }
    Ok(p_phys.min(p_dig))
}
