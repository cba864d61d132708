use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture of the dual encoder.
///
/// The toy default (32×32 input, 8×8 patches, d=32, 4 blocks) trains on a
/// laptop CPU. [`EncoderConfig::reference_scale`] records the geometry of the
/// ViT-B/16 setting the method was published with (224×224 input, 14×14
/// patches, 512-d features); that configuration is documentation only and is
/// never trained here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub image_size: usize,
    pub patch_size: usize,
    /// Shared output dimension `d` of both towers.
    pub embed_dim: usize,
    pub text_width: usize,
    pub vision_width: usize,
    pub depth: usize,
    pub heads: usize,
    pub vocab_size: usize,
    pub max_text_len: usize,
    pub temperature: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            image_size: 32,
            patch_size: 8,
            embed_dim: 32,
            text_width: 32,
            vision_width: 32,
            depth: 4,
            heads: 4,
            vocab_size: 128,
            max_text_len: 32,
            temperature: 0.07,
        }
    }
}

impl EncoderConfig {
    pub fn reference_scale() -> Self {
        Self {
            image_size: 224,
            patch_size: 14,
            embed_dim: 512,
            text_width: 512,
            vision_width: 768,
            depth: 12,
            heads: 8,
            vocab_size: 49408,
            max_text_len: 77,
            temperature: 0.07,
        }
    }

    /// Number of patches `N_v = (H / patch)²`.
    pub fn num_patches(&self) -> usize {
        let side = self.image_size / self.patch_size;
        side * side
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * 3
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.patch_size == 0 || self.image_size == 0 || self.image_size % self.patch_size != 0 {
            return fail(format!(
                "image size {} is not divisible by patch size {}",
                self.image_size, self.patch_size
            ));
        }
        if self.depth == 0 || self.heads == 0 || self.embed_dim == 0 {
            return fail("depth, heads and embed_dim must be positive".into());
        }
        for (name, w) in [("text_width", self.text_width), ("vision_width", self.vision_width)] {
            if w == 0 || w % self.heads != 0 {
                return fail(format!("{name} {w} is not divisible by {} heads", self.heads));
            }
        }
        if self.max_text_len < 3 {
            return fail("max_text_len must leave room for SOS, one word and EOS".into());
        }
        if self.vocab_size < 5 {
            return fail("vocab_size must exceed the reserved ids".into());
        }
        if !(self.temperature > 0.0) {
            return fail(format!("temperature must be positive, got {}", self.temperature));
        }
        Ok(())
    }
}
