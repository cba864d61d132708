//! Frozen dual-encoder weights.

use std::collections::BTreeMap;

use crate::autograd::{Graph, Var};
use crate::clip::config::EncoderConfig;
use crate::error::{Error, Result};
use crate::nn::{BlockParams, LayerNormParams, ParamTree};
use crate::rng::Rng;
use crate::tensor::Tensor;

const EMBED_STD: f64 = 0.02;

#[derive(Debug, Clone)]
pub struct VisionTower<T> {
    /// `[w, patch·patch·3]`, no bias.
    pub patch_embed: T,
    /// `[w]`
    pub class_embed: T,
    /// `[1 + N_v, w]`
    pub pos_embed: T,
    pub blocks: Vec<BlockParams<T>>,
    pub ln_post: LayerNormParams<T>,
    /// `[d, w]`
    pub proj: T,
}

#[derive(Debug, Clone)]
pub struct TextTower<T> {
    /// `[vocab, w]`
    pub token_embed: T,
    /// `[max_text_len, w]`
    pub pos_embed: T,
    pub blocks: Vec<BlockParams<T>>,
    pub ln_final: LayerNormParams<T>,
    /// `[d, w]`
    pub proj: T,
}

#[derive(Debug, Clone)]
pub struct Towers<T> {
    pub vision: VisionTower<T>,
    pub text: TextTower<T>,
}

impl<T> ParamTree<T> for VisionTower<T> {
    type Mapped<U> = VisionTower<U>;

    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a T)) {
        f(format!("{prefix}.patch_embed"), &self.patch_embed);
        f(format!("{prefix}.class_embed"), &self.class_embed);
        f(format!("{prefix}.pos_embed"), &self.pos_embed);
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&format!("{prefix}.blocks.{i}"), f);
        }
        self.ln_post.visit(&format!("{prefix}.ln_post"), f);
        f(format!("{prefix}.proj"), &self.proj);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut T)) {
        f(format!("{prefix}.patch_embed"), &mut self.patch_embed);
        f(format!("{prefix}.class_embed"), &mut self.class_embed);
        f(format!("{prefix}.pos_embed"), &mut self.pos_embed);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_mut(&format!("{prefix}.blocks.{i}"), f);
        }
        self.ln_post.visit_mut(&format!("{prefix}.ln_post"), f);
        f(format!("{prefix}.proj"), &mut self.proj);
    }

    fn map<U>(&self, f: &mut dyn FnMut(&T) -> U) -> VisionTower<U> {
        VisionTower {
            patch_embed: f(&self.patch_embed),
            class_embed: f(&self.class_embed),
            pos_embed: f(&self.pos_embed),
            blocks: self.blocks.iter().map(|b| b.map(f)).collect(),
            ln_post: self.ln_post.map(f),
            proj: f(&self.proj),
        }
    }
}

impl<T> ParamTree<T> for TextTower<T> {
    type Mapped<U> = TextTower<U>;

    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a T)) {
        f(format!("{prefix}.token_embed"), &self.token_embed);
        f(format!("{prefix}.pos_embed"), &self.pos_embed);
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&format!("{prefix}.blocks.{i}"), f);
        }
        self.ln_final.visit(&format!("{prefix}.ln_final"), f);
        f(format!("{prefix}.proj"), &self.proj);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut T)) {
        f(format!("{prefix}.token_embed"), &mut self.token_embed);
        f(format!("{prefix}.pos_embed"), &mut self.pos_embed);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_mut(&format!("{prefix}.blocks.{i}"), f);
        }
        self.ln_final.visit_mut(&format!("{prefix}.ln_final"), f);
        f(format!("{prefix}.proj"), &mut self.proj);
    }

    fn map<U>(&self, f: &mut dyn FnMut(&T) -> U) -> TextTower<U> {
        TextTower {
            token_embed: f(&self.token_embed),
            pos_embed: f(&self.pos_embed),
            blocks: self.blocks.iter().map(|b| b.map(f)).collect(),
            ln_final: self.ln_final.map(f),
            proj: f(&self.proj),
        }
    }
}

impl<T> ParamTree<T> for Towers<T> {
    type Mapped<U> = Towers<U>;

    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a T)) {
        self.vision.visit(&format!("{prefix}visual"), f);
        self.text.visit(&format!("{prefix}text"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut T)) {
        self.vision.visit_mut(&format!("{prefix}visual"), f);
        self.text.visit_mut(&format!("{prefix}text"), f);
    }

    fn map<U>(&self, f: &mut dyn FnMut(&T) -> U) -> Towers<U> {
        Towers {
            vision: self.vision.map(f),
            text: self.text.map(f),
        }
    }
}

/// Backbone weights. Without pretrained CLIP weights at hand, these come from
/// a seeded random initialization and are then frozen; [`BackboneParams::load_named`]
/// accepts real weights with matching names and shapes.
#[derive(Debug, Clone)]
pub struct BackboneParams {
    pub config: EncoderConfig,
    pub towers: Towers<Tensor>,
    pub frozen: bool,
}

pub const BACKBONE_PREFIX: &str = "backbone.";

impl BackboneParams {
    pub fn init(config: &EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::new(seed);
        let (vw, tw, d, depth) = (config.vision_width, config.text_width, config.embed_dim, config.depth);
        let vision = VisionTower {
            patch_embed: Tensor::trunc_normal(&[vw, config.patch_dim()], (config.patch_dim() as f64).powf(-0.5), &mut rng),
            class_embed: Tensor::trunc_normal(&[vw], EMBED_STD, &mut rng),
            pos_embed: Tensor::trunc_normal(&[1 + config.num_patches(), vw], EMBED_STD, &mut rng),
            blocks: (0..depth).map(|_| BlockParams::init(vw, depth, &mut rng)).collect(),
            ln_post: LayerNormParams::init(vw),
            proj: Tensor::trunc_normal(&[d, vw], (vw as f64).powf(-0.5), &mut rng),
        };
        let text = TextTower {
            token_embed: Tensor::trunc_normal(&[config.vocab_size, tw], EMBED_STD, &mut rng),
            pos_embed: Tensor::trunc_normal(&[config.max_text_len, tw], EMBED_STD, &mut rng),
            blocks: (0..depth).map(|_| BlockParams::init(tw, depth, &mut rng)).collect(),
            ln_final: LayerNormParams::init(tw),
            proj: Tensor::trunc_normal(&[d, tw], (tw as f64).powf(-0.5), &mut rng),
        };
        Ok(Self {
            config: config.clone(),
            towers: Towers { vision, text },
            frozen: true,
        })
    }

    /// Places every weight on `g` as a leaf. Frozen weights never require grad.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Towers<Var> {
        let rg = trainable && !self.frozen;
        self.towers.map(&mut |t: &Tensor| g.leaf(t.clone(), rg))
    }

    /// Binds with gradients enabled regardless of the frozen flag (gradient checks only).
    pub fn bind_for_gradcheck(&self, g: &mut Graph) -> Towers<Var> {
        self.towers.map(&mut |t: &Tensor| g.param(t.clone()))
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        self.towers.visit(BACKBONE_PREFIX, &mut |n, t| out.push((n, t)));
        out
    }

    pub fn num_params(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// FNV-1a over every name, shape and value bit pattern.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for b in bytes {
                h ^= *b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for (name, t) in self.named_tensors() {
            eat(name.as_bytes());
            for s in t.shape() {
                eat(&(*s as u64).to_le_bytes());
            }
            for v in t.data() {
                eat(&v.to_bits().to_le_bytes());
            }
        }
        h
    }

    /// Replaces weights from a name → tensor map; every backbone key must be present.
    pub fn load_named(&mut self, tensors: &BTreeMap<String, Tensor>) -> Result<()> {
        let mut err = None;
        self.towers.visit_mut(BACKBONE_PREFIX, &mut |name, slot| {
            if err.is_some() {
                return;
            }
            match tensors.get(&name) {
                Some(t) if t.shape() == slot.shape() => *slot = t.clone(),
                Some(t) => {
                    err = Some(Error::dim(
                        "load_named",
                        format!("{name}: expected {:?}, found {:?}", slot.shape(), t.shape()),
                    ))
                }
                None => err = Some(Error::Input(format!("missing backbone tensor {name}"))),
            }
        });
        err.map_or(Ok(()), Err)
    }
}
