//! CLIP-style frozen dual encoder.

pub mod backbone;
pub mod config;
pub mod encoder;
pub mod head;
pub mod prompts;
pub mod sequence;
pub mod tokenizer;

pub use backbone::{BackboneParams, TextTower, Towers, VisionTower};
pub use config::EncoderConfig;
pub use encoder::{encode_image, encode_text, image_patches};
pub use head::{class_log_probabilities, class_probabilities};
pub use prompts::{ClassPrompt, ClassPromptSet};
pub use sequence::{AssembledSequence, Role, SequenceHook};
pub use tokenizer::Vocab;

use crate::autograd::Graph;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Backbone plus vocabulary: everything needed for vanilla zero-shot inference.
#[derive(Debug, Clone)]
pub struct ClipModel {
    pub backbone: BackboneParams,
    pub vocab: Vocab,
}

/// Text-encoder embeddings of every class description, one row each.
#[derive(Debug, Clone)]
pub struct ClassEmbeddings {
    pub matrix: Tensor,
    /// Class index of each row.
    pub class_index: Vec<usize>,
    /// The templated text each row was encoded from.
    pub texts: Vec<String>,
}

impl ClipModel {
    pub fn new(config: &EncoderConfig, prompts: &ClassPromptSet, seed: u64) -> Result<Self> {
        prompts.validate()?;
        let texts = prompts.all_texts();
        let vocab = Vocab::from_texts(texts.iter().map(String::as_str));
        Self::with_vocab(BackboneParams::init(config, seed)?, vocab)
    }

    pub fn with_vocab(backbone: BackboneParams, vocab: Vocab) -> Result<Self> {
        if vocab.len() > backbone.config.vocab_size {
            return Err(Error::Config(format!(
                "vocabulary of {} tokens exceeds vocab_size {}",
                vocab.len(),
                backbone.config.vocab_size
            )));
        }
        Ok(Self { backbone, vocab })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.backbone.config
    }

    pub fn tokenize(&self, text: &str) -> Result<Vec<u32>> {
        self.vocab.tokenize(text, self.config().max_text_len)
    }

    pub fn encode_images(&self, images: &[Tensor]) -> Result<Vec<Tensor>> {
        let mut g = Graph::new();
        let towers = self.backbone.bind(&mut g, false);
        images
            .iter()
            .map(|im| {
                let v = encode_image(&mut g, &towers.vision, self.config(), im, None)?;
                Ok(g.value(v).clone())
            })
            .collect()
    }

    pub fn encode_image(&self, image: &Tensor) -> Result<Tensor> {
        Ok(self.encode_images(std::slice::from_ref(image))?.remove(0))
    }

    pub fn encode_texts(&self, texts: &[String]) -> Result<Tensor> {
        let mut g = Graph::new();
        let towers = self.backbone.bind(&mut g, false);
        let mut rows = Vec::with_capacity(texts.len());
        for t in texts {
            let ids = self.tokenize(t)?;
            let l = encode_text(&mut g, &towers.text, self.config(), &ids, None)?;
            rows.push(g.value(l).data().to_vec());
        }
        Tensor::from_rows(&rows)
    }

    pub fn encode_text(&self, text: &str) -> Result<Tensor> {
        let m = self.encode_texts(&[text.to_string()])?;
        m.reshape(&[self.config().embed_dim])
    }

    /// Embeddings of every templated description of every class (the clustering input).
    pub fn class_embeddings(&self, prompts: &ClassPromptSet) -> Result<ClassEmbeddings> {
        prompts.validate()?;
        let mut texts = Vec::new();
        let mut class_index = Vec::new();
        for (c, class) in prompts.classes.iter().enumerate() {
            for d in &class.descriptions {
                texts.push(prompts.fill(d));
                class_index.push(c);
            }
        }
        Ok(ClassEmbeddings {
            matrix: self.encode_texts(&texts)?,
            class_index,
            texts,
        })
    }

    /// Zero-shot class features `[C, d]` from the template filled with each class name.
    pub fn zero_shot_features(&self, prompts: &ClassPromptSet, names: &[&str]) -> Result<Tensor> {
        let texts: Vec<String> = names.iter().map(|n| prompts.fill(n)).collect();
        self.encode_texts(&texts)
    }
}
