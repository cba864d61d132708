//! The prompted dual encoder: frozen backbone, shared context bank and one
//! prompt bundle per branch.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::checkpoint::{self, TensorMap};
use crate::clip::{
    class_log_probabilities, class_probabilities, encode_image, encode_text, BackboneParams, ClassPromptSet,
    ClipModel, EncoderConfig, Towers, Vocab,
};
use crate::error::{Error, Result};
use crate::prompt::assemble::{ImageHook, Injection, TextHook};
use crate::prompt::branch::{fuse_branches, BoundBundle, Branch, PromptBundle, PromptConfig};
use crate::prompt::context::{BoundContext, ContextBank};
use crate::tensor::Tensor;

pub const CONTEXT_CENTERS: &str = "context.centers";
pub const CONTEXT_W_TEXT: &str = "context.w_text";
pub const CONTEXT_W_VISION: &str = "context.w_vision";

#[derive(Debug, Clone)]
pub struct PromptedModel {
    pub clip: ClipModel,
    pub classes: ClassPromptSet,
    pub config: PromptConfig,
    pub bank: Option<ContextBank>,
    pub physical: PromptBundle,
    pub digital: PromptBundle,
}

/// Every model parameter placed on one graph.
#[derive(Debug, Clone)]
pub struct BoundModel {
    pub towers: Towers<Var>,
    pub context: Option<BoundContext>,
    pub physical: BoundBundle,
    pub digital: BoundBundle,
}

impl BoundModel {
    pub fn bundle(&self, branch: Branch) -> BoundBundle {
        match branch {
            Branch::Physical => self.physical,
            Branch::Digital => self.digital,
        }
    }
}

/// Output of one branch on one image.
#[derive(Debug, Clone)]
pub struct BranchOutput {
    /// `[p(live), p(attack)]`
    pub probabilities: [f64; 2],
    pub image_feature: Tensor,
    /// `[2, d]`, live class first.
    pub class_features: Tensor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusedScore {
    pub live: f64,
    pub physical: f64,
    pub digital: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelFile {
    encoder: EncoderConfig,
    prompts: PromptConfig,
}

impl PromptedModel {
    /// Builds the context bank from the clip model's description embeddings
    /// (when `K > 0`) and initializes both bundles.
    pub fn new(clip: ClipModel, classes: ClassPromptSet, config: PromptConfig, seed: u64) -> Result<Self> {
        classes.validate()?;
        for b in Branch::ALL {
            for name in b.class_names() {
                if classes.class(name).is_none() {
                    return Err(Error::Input(format!("class prompt set lacks class {name:?}")));
                }
            }
        }
        let enc = clip.config().clone();
        config.validate(&enc)?;
        let bank = if config.context_tokens > 0 {
            let embeds = clip.class_embeddings(&classes)?;
            Some(ContextBank::build(
                &embeds.matrix,
                config.context_tokens,
                enc.text_width,
                enc.vision_width,
                config.init_std,
                seed,
            )?)
        } else {
            None
        };
        Ok(Self {
            physical: PromptBundle::init(Branch::Physical, &config, &enc, seed)?,
            digital: PromptBundle::init(Branch::Digital, &config, &enc, seed)?,
            clip,
            classes,
            config,
            bank,
        })
    }

    pub fn encoder(&self) -> &EncoderConfig {
        self.clip.config()
    }

    pub fn bundle(&self, branch: Branch) -> &PromptBundle {
        match branch {
            Branch::Physical => &self.physical,
            Branch::Digital => &self.digital,
        }
    }

    pub fn bundle_mut(&mut self, branch: Branch) -> &mut PromptBundle {
        match branch {
            Branch::Physical => &mut self.physical,
            Branch::Digital => &mut self.digital,
        }
    }

    pub fn context_tokens(&self) -> usize {
        self.bank.as_ref().map_or(0, ContextBank::k)
    }

    /// Binds everything; the backbone and the cluster centers never require grad.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> BoundModel {
        let vars: Vec<Var> = self
            .trainable_named()
            .into_iter()
            .map(|(_, t)| g.leaf(t.clone(), trainable))
            .collect();
        self.bind_with(g, &vars).expect("model tensors are consistent")
    }

    /// Binds the frozen parts and uses `trainable` (in `trainable_named` order)
    /// for the learnable tensors.
    pub fn bind_with(&self, g: &mut Graph, trainable: &[Var]) -> Result<BoundModel> {
        let names = self.trainable_named();
        if trainable.len() != names.len() {
            return Err(Error::Internal(format!(
                "{} trainable vars for {} tensors",
                trainable.len(),
                names.len()
            )));
        }
        for ((name, t), &v) in names.iter().zip(trainable) {
            if g.value(v).shape() != t.shape() {
                return Err(Error::dim("bind_with", format!("{name}: {:?} vs {:?}", g.value(v).shape(), t.shape())));
            }
        }
        let towers = self.clip.backbone.bind(g, false);
        let mut rest = trainable;
        let context = match &self.bank {
            Some(bank) => {
                let c = bank.project_on(g, rest[0], rest[1])?;
                rest = &rest[2..];
                Some(c)
            }
            None => None,
        };
        let mut take = |present: bool| {
            present.then(|| {
                let v = rest[0];
                rest = &rest[1..];
                v
            })
        };
        let physical = BoundBundle {
            text: take(self.physical.text.is_some()),
            vision: take(self.physical.vision.is_some()),
        };
        let digital = BoundBundle {
            text: take(self.digital.text.is_some()),
            vision: take(self.digital.vision.is_some()),
        };
        Ok(BoundModel {
            towers,
            context,
            physical,
            digital,
        })
    }

    /// Trainable vars of a bound model, in `trainable_named` order.
    pub fn bound_trainable(&self, bound: &BoundModel) -> Vec<Var> {
        let mut out = Vec::new();
        if let Some(c) = bound.context {
            out.push(c.w_text);
            out.push(c.w_vision);
        }
        for b in [bound.physical, bound.digital] {
            out.extend(b.text);
            out.extend(b.vision);
        }
        out
    }

    fn injections(&self, bound: &BoundModel, branch: Branch) -> (Injection, Injection) {
        let bundle = self.bundle(branch);
        let b = bound.bundle(branch);
        let layers = self.encoder().depth;
        let text = Injection {
            context: bound.context.map(|c| c.text),
            prompts: b.text,
            prompt_len: bundle.text_len(),
            depth: bundle.depth,
            num_layers: layers,
        };
        let image = Injection {
            context: bound.context.map(|c| c.vision),
            prompts: b.vision,
            prompt_len: bundle.vision_len(),
            depth: bundle.depth,
            num_layers: layers,
        };
        (text, image)
    }

    /// Token ids of the branch's class names, live first.
    pub fn class_tokens(&self, branch: Branch) -> Result<[Vec<u32>; 2]> {
        let [live, attack] = branch.class_names();
        Ok([self.clip.tokenize(live)?, self.clip.tokenize(attack)?])
    }

    /// Prompted class features `[2, d]` of a branch.
    pub fn class_features(&self, g: &mut Graph, bound: &BoundModel, branch: Branch) -> Result<Var> {
        let (text, _) = self.injections(bound, branch);
        let hook = TextHook(text);
        let enc = self.encoder();
        let mut rows = Vec::with_capacity(2);
        for ids in self.class_tokens(branch)? {
            let l = encode_text(g, &bound.towers.text, enc, &ids, Some(&hook))?;
            rows.push(g.reshape(l, &[1, enc.embed_dim])?);
        }
        g.concat_rows(&rows)
    }

    /// Prompted image features `[n, d]` of a branch.
    pub fn image_features(&self, g: &mut Graph, bound: &BoundModel, branch: Branch, images: &[Tensor]) -> Result<Var> {
        if images.is_empty() {
            return Err(Error::Input("no images".into()));
        }
        let (_, image) = self.injections(bound, branch);
        let hook = ImageHook(image);
        let enc = self.encoder();
        let mut rows = Vec::with_capacity(images.len());
        for im in images {
            let v = encode_image(g, &bound.towers.vision, enc, im, Some(&hook))?;
            rows.push(g.reshape(v, &[1, enc.embed_dim])?);
        }
        g.concat_rows(&rows)
    }

    /// Log-probabilities `[n, 2]` (live, attack) of a branch.
    pub fn branch_log_probs(&self, g: &mut Graph, image_features: Var, class_features: Var) -> Result<Var> {
        class_log_probabilities(g, image_features, class_features, self.encoder().temperature)
    }

    /// Prompted class features of both branches as plain tensors.
    pub fn class_feature_values(&self) -> Result<BTreeMap<Branch, Tensor>> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g, false);
        let mut out = BTreeMap::new();
        for b in Branch::ALL {
            let f = self.class_features(&mut g, &bound, b)?;
            out.insert(b, g.value(f).clone());
        }
        Ok(out)
    }

    pub fn branch_forward(&self, image: &Tensor, branch: Branch) -> Result<BranchOutput> {
        let class_features = self.class_feature_values()?.remove(&branch).expect("both branches present");
        self.branch_forward_with(image, branch, &class_features)
    }

    fn branch_forward_with(&self, image: &Tensor, branch: Branch, class_features: &Tensor) -> Result<BranchOutput> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g, false);
        let v = self.image_features(&mut g, &bound, branch, std::slice::from_ref(image))?;
        let v = g.value(v).reshape(&[self.encoder().embed_dim])?;
        let p = class_probabilities(v.data(), class_features, self.encoder().temperature)?;
        Ok(BranchOutput {
            probabilities: [p[0], p[1]],
            image_feature: v,
            class_features: class_features.clone(),
        })
    }

    /// Fused live score and the two branch live probabilities for every image.
    pub fn score_images(&self, images: &[Tensor]) -> Result<Vec<FusedScore>> {
        let feats = self.class_feature_values()?;
        images
            .iter()
            .map(|im| {
                let phys = self.branch_forward_with(im, Branch::Physical, &feats[&Branch::Physical])?;
                let dig = self.branch_forward_with(im, Branch::Digital, &feats[&Branch::Digital])?;
                let (p, d) = (phys.probabilities[0], dig.probabilities[0]);
                Ok(FusedScore {
                    live: fuse_branches(p, d)?,
                    physical: p,
                    digital: d,
                })
            })
            .collect()
    }

    /// Zero-shot peers: vanilla class-name features `[2, d]` of a branch.
    pub fn peer_class_features(&self, branch: Branch) -> Result<Tensor> {
        let names: Vec<String> = branch.class_names().iter().map(|s| s.to_string()).collect();
        self.clip.encode_texts(&names)
    }

    /// Trainable tensors by dotted name: the context projections and both bundles.
    pub fn trainable_named(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        if let Some(b) = &self.bank {
            out.push((CONTEXT_W_TEXT.to_string(), &b.w_text));
            out.push((CONTEXT_W_VISION.to_string(), &b.w_vision));
        }
        out.extend(self.physical.named_tensors());
        out.extend(self.digital.named_tensors());
        out
    }

    pub fn trainable_named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        if let Some(b) = &mut self.bank {
            out.push((CONTEXT_W_TEXT.to_string(), &mut b.w_text));
            out.push((CONTEXT_W_VISION.to_string(), &mut b.w_vision));
        }
        out.extend(self.physical.named_tensors_mut());
        out.extend(self.digital.named_tensors_mut());
        out
    }

    pub fn num_trainable(&self) -> usize {
        self.trainable_named().iter().map(|(_, t)| t.len()).sum()
    }

    /// Every tensor needed to restore the model.
    pub fn tensor_map(&self) -> TensorMap {
        let mut m: TensorMap = self
            .clip
            .backbone
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect();
        if let Some(b) = &self.bank {
            m.insert(CONTEXT_CENTERS.into(), b.centers().clone());
        }
        for (n, t) in self.trainable_named() {
            m.insert(n, t.clone());
        }
        m
    }

    /// Writes `model.ckpt` (+ manifest), `model.toml`, `vocab.txt` and `classes.toml` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        checkpoint::save(&dir.join("model.ckpt"), &self.tensor_map())?;
        let file = ModelFile {
            encoder: self.encoder().clone(),
            prompts: self.config.clone(),
        };
        let text = toml::to_string(&file).map_err(|e| Error::Internal(format!("model config: {e}")))?;
        let p = dir.join("model.toml");
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        self.clip.vocab.save(&dir.join("vocab.txt"))?;
        let p = dir.join("classes.toml");
        std::fs::write(&p, self.classes.to_toml()).map_err(|e| Error::io(&p, e))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let p = dir.join("model.toml");
        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        let file: ModelFile = toml::from_str(&text).map_err(|e| Error::Format {
            path: p.clone(),
            msg: e.to_string(),
        })?;
        let classes = ClassPromptSet::load(&dir.join("classes.toml"))?;
        let vocab = Vocab::load(&dir.join("vocab.txt"))?;
        let ckpt_path = dir.join("model.ckpt");
        let tensors = checkpoint::load(&ckpt_path)?;
        let format_err = |msg: String| Error::Format {
            path: ckpt_path.clone(),
            msg,
        };

        let mut backbone = BackboneParams::init(&file.encoder, 0)?;
        backbone.load_named(&tensors).map_err(|e| format_err(e.to_string()))?;
        let clip = ClipModel::with_vocab(backbone, vocab)?;

        let bank = match tensors.get(CONTEXT_CENTERS) {
            Some(c) => {
                let get = |k: &str| {
                    tensors
                        .get(k)
                        .cloned()
                        .ok_or_else(|| format_err(format!("missing {k}")))
                };
                Some(ContextBank::from_parts(c.clone(), get(CONTEXT_W_TEXT)?, get(CONTEXT_W_VISION)?)?)
            }
            None => None,
        };
        if bank.as_ref().map_or(0, ContextBank::k) != file.prompts.context_tokens {
            return Err(format_err("context size disagrees with model.toml".into()));
        }
        let mut model = Self {
            physical: PromptBundle::init(Branch::Physical, &file.prompts, &file.encoder, 0)?,
            digital: PromptBundle::init(Branch::Digital, &file.prompts, &file.encoder, 0)?,
            clip,
            classes,
            config: file.prompts,
            bank,
        };
        for b in Branch::ALL {
            for (name, slot) in model.bundle_mut(b).named_tensors_mut() {
                let t = tensors.get(&name).ok_or_else(|| format_err(format!("missing {name}")))?;
                if t.shape() != slot.shape() {
                    return Err(format_err(format!("{name}: expected {:?}, found {:?}", slot.shape(), t.shape())));
                }
                *slot = t.clone();
            }
        }
        let expected = model.tensor_map().len();
        if tensors.len() != expected {
            return Err(format_err(format!("{} tensors, expected {expected}", tensors.len())));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn clip() -> ClipModel {
        ClipModel::new(&EncoderConfig::default(), &ClassPromptSet::default(), 0).unwrap()
    }

    fn image(seed: u64) -> Tensor {
        let mut r = Rng::new(seed);
        Tensor::new(&[32, 32, 3], (0..32 * 32 * 3).map(|_| r.uniform()).collect()).unwrap()
    }

    #[test]
    fn probabilities_sum_to_one() {
        let m = PromptedModel::new(clip(), ClassPromptSet::default(), PromptConfig::default(), 1).unwrap();
        for b in Branch::ALL {
            let out = m.branch_forward(&image(0), b).unwrap();
            assert!((out.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(out.class_features.shape(), &[2, 32]);
        }
    }

    #[test]
    fn identical_bundles_give_identical_branches() {
        let mut m = PromptedModel::new(clip(), ClassPromptSet::default(), PromptConfig::default(), 1).unwrap();
        let p = m.branch_forward(&image(3), Branch::Physical).unwrap();
        let d = m.branch_forward(&image(3), Branch::Digital).unwrap();
        assert_ne!(p.probabilities, d.probabilities);
        // The class sets differ, so copy prompts and compare image features only.
        m.digital.text = m.physical.text.clone();
        m.digital.vision = m.physical.vision.clone();
        let d = m.branch_forward(&image(3), Branch::Digital).unwrap();
        assert!(p.image_feature.bit_eq(&d.image_feature));
    }

    #[test]
    fn digital_perturbation_leaves_physical_untouched() {
        let mut m = PromptedModel::new(clip(), ClassPromptSet::default(), PromptConfig::default(), 2).unwrap();
        let before = m.branch_forward(&image(5), Branch::Physical).unwrap();
        for v in m.digital.vision.as_mut().unwrap().data_mut() {
            *v += 0.3;
        }
        for v in m.digital.text.as_mut().unwrap().data_mut() {
            *v -= 0.3;
        }
        let after = m.branch_forward(&image(5), Branch::Physical).unwrap();
        assert_eq!(before.probabilities.map(f64::to_bits), after.probabilities.map(f64::to_bits));
    }

    #[test]
    fn empty_prompts_reduce_to_vanilla() {
        let c = clip();
        let m = PromptedModel::new(c.clone(), ClassPromptSet::default(), PromptConfig::empty(), 0).unwrap();
        let im = image(9);
        let out = m.branch_forward(&im, Branch::Digital).unwrap();
        assert!(out.image_feature.bit_eq(&c.encode_image(&im).unwrap()));
        assert!(out.class_features.bit_eq(&m.peer_class_features(Branch::Digital).unwrap()));
    }

    #[test]
    fn save_load_round_trip() {
        let m = PromptedModel::new(clip(), ClassPromptSet::default(), PromptConfig::default(), 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        m.save(dir.path()).unwrap();
        let back = PromptedModel::load(dir.path()).unwrap();
        let (a, b) = (m.tensor_map(), back.tensor_map());
        assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
        assert!(a.iter().all(|(k, t)| b[k].bit_eq(t)));
        assert_eq!(back.clip.backbone.checksum(), m.clip.backbone.checksum());
        let s1 = m.score_images(&[image(1)]).unwrap();
        let s2 = back.score_images(&[image(1)]).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn missing_class_is_rejected() {
        let mut classes = ClassPromptSet::default();
        classes.classes.pop();
        assert!(PromptedModel::new(clip(), classes, PromptConfig::default(), 0).is_err());
    }
}
