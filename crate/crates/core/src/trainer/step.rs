use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::datagen::{Label, Sample};
use crate::error::{Error, Result};
use crate::prompt::{BoundModel, Branch, PromptedModel};
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::trainer::adam::Adam;
use crate::trainer::augment::augment;
use crate::trainer::caa::{caa_select, CaaSelection};
use crate::trainer::config::TrainConfig;
use crate::trainer::loss::{branch_ce_loss, cosine_distance};

/// Zero-shot class features of each branch from the frozen backbone.
#[derive(Debug, Clone)]
pub struct Peers {
    pub class: BTreeMap<Branch, Tensor>,
}

impl Peers {
    pub fn compute(model: &PromptedModel) -> Result<Self> {
        let class = Branch::ALL
            .into_iter()
            .map(|b| Ok((b, model.peer_class_features(b)?)))
            .collect::<Result<_>>()?;
        Ok(Self { class })
    }
}

/// Augmented batch with its hard-sample selection and frozen visual peers.
#[derive(Debug, Clone)]
pub struct Batch {
    pub images: Vec<Tensor>,
    pub labels: Vec<Label>,
    pub selection: CaaSelection,
    /// Vanilla image features of the augmented images.
    pub peer_visual: Vec<Tensor>,
}

impl Batch {
    /// Batch without augmentation or hard-sample weighting.
    pub fn plain(model: &PromptedModel, samples: &[&Sample]) -> Result<Self> {
        let images: Vec<Tensor> = samples.iter().map(|s| s.image.clone()).collect();
        Ok(Self {
            peer_visual: model.clip.encode_images(&images)?,
            labels: samples.iter().map(|s| s.label).collect(),
            selection: CaaSelection::uniform(samples.len()),
            images,
        })
    }
}

/// Scores the raw images with both branches (when CAA is on), selects hard
/// samples and augments every image with its own stream of `rng`.
pub fn prepare_batch(model: &PromptedModel, samples: &[&Sample], cfg: &TrainConfig, rng: &Rng) -> Result<Batch> {
    if samples.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let raw: Vec<Tensor> = samples.iter().map(|s| s.image.clone()).collect();
    let selection = if cfg.caa_on {
        let scores = model.score_images(&raw)?;
        let phys: Vec<f64> = scores.iter().map(|s| s.physical).collect();
        let dig: Vec<f64> = scores.iter().map(|s| s.digital).collect();
        caa_select(&phys, &dig, cfg.caa_quantile, cfg.caa_weight)
    } else {
        CaaSelection::uniform(samples.len())
    };
    let images: Vec<Tensor> = raw
        .iter()
        .zip(&selection.directives)
        .enumerate()
        .map(|(i, (im, &d))| augment(im, d, &mut rng.derive(i as u64)))
        .collect();
    Ok(Batch {
        peer_visual: model.clip.encode_images(&images)?,
        labels: samples.iter().map(|s| s.label).collect(),
        selection,
        images,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    /// Cross-entropy per branch; `None` when the batch has no legal sample.
    pub ce_physical: Option<Var>,
    pub ce_digital: Option<Var>,
    pub consistency_text: Var,
    pub consistency_visual: Var,
    pub total: Var,
}

impl LossVars {
    pub fn ce(&self, branch: Branch) -> Option<Var> {
        match branch {
            Branch::Physical => self.ce_physical,
            Branch::Digital => self.ce_digital,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ce_physical: f64,
    pub ce_digital: f64,
    pub consistency_text: f64,
    pub consistency_visual: f64,
    pub total: f64,
    pub n_hard: usize,
    /// Set when a branch had no legal sample and contributed nothing.
    pub physical_empty: bool,
    pub digital_empty: bool,
}

impl LossBreakdown {
    pub fn read(g: &Graph, vars: &LossVars, batch: &Batch) -> Self {
        let val = |v: Option<Var>| v.map_or(0.0, |v| g.scalar_value(v));
        Self {
            ce_physical: val(vars.ce_physical),
            ce_digital: val(vars.ce_digital),
            consistency_text: g.scalar_value(vars.consistency_text),
            consistency_visual: g.scalar_value(vars.consistency_visual),
            total: g.scalar_value(vars.total),
            n_hard: batch.selection.num_hard(),
            physical_empty: vars.ce_physical.is_none(),
            digital_empty: vars.ce_digital.is_none(),
        }
    }
}

/// Records the full objective on `g`:
/// `ce_phys + ce_dig + λ·(text consistency + visual consistency)`.
///
/// Each branch sees only its legal samples. Consistency terms are averaged
/// over the branches that contribute.
pub fn build_loss(
    model: &PromptedModel,
    g: &mut Graph,
    bound: &BoundModel,
    batch: &Batch,
    peers: &Peers,
    lambda: f64,
) -> Result<LossVars> {
    let mut ce = BTreeMap::new();
    let mut text_terms = Vec::new();
    let mut visual_terms = Vec::new();
    for branch in Branch::ALL {
        let class_feats = model.class_features(g, bound, branch)?;
        let peer_class = g.constant(peers.class[&branch].clone());
        text_terms.push(cosine_distance(g, class_feats, peer_class)?);

        let idx: Vec<usize> = (0..batch.labels.len())
            .filter(|&i| batch.labels[i].legal_for(branch))
            .collect();
        if idx.is_empty() {
            continue;
        }
        let images: Vec<Tensor> = idx.iter().map(|&i| batch.images[i].clone()).collect();
        let feats = model.image_features(g, bound, branch, &images)?;
        let log_probs = model.branch_log_probs(g, feats, class_feats)?;
        let targets: Vec<usize> = idx.iter().map(|&i| batch.labels[i].branch_target()).collect();
        let weights: Vec<f64> = idx.iter().map(|&i| batch.selection.weights[i]).collect();
        ce.insert(branch, branch_ce_loss(g, log_probs, &targets, &weights)?);

        let d = model.encoder().embed_dim;
        let peer_rows: Vec<f64> = idx.iter().flat_map(|&i| batch.peer_visual[i].data().to_vec()).collect();
        let peer_visual = g.constant(Tensor::new(&[idx.len(), d], peer_rows)?);
        visual_terms.push(cosine_distance(g, feats, peer_visual)?);
    }
    let mean_of = |g: &mut Graph, terms: &[Var]| {
        let w = 1.0 / terms.len() as f64;
        g.combine(&terms.iter().map(|&t| (t, w)).collect::<Vec<_>>())
    };
    let consistency_text = mean_of(g, &text_terms)?;
    if visual_terms.is_empty() {
        return Err(Error::Input("batch has no sample legal for any branch".into()));
    }
    let consistency_visual = mean_of(g, &visual_terms)?;
    let mut terms: Vec<(Var, f64)> = ce.values().map(|&v| (v, 1.0)).collect();
    terms.push((consistency_text, lambda));
    terms.push((consistency_visual, lambda));
    let total = g.combine(&terms)?;
    Ok(LossVars {
        ce_physical: ce.get(&Branch::Physical).copied(),
        ce_digital: ce.get(&Branch::Digital).copied(),
        consistency_text,
        consistency_visual,
        total,
    })
}

/// One Adam step on the trainable tensors. The backbone is bound without
/// gradient and is never written.
pub fn train_step(
    model: &mut PromptedModel,
    batch: &Batch,
    peers: &Peers,
    adam: &mut Adam,
    lambda: f64,
) -> Result<LossBreakdown> {
    let mut g = Graph::new();
    let bound = model.bind(&mut g, true);
    let vars = build_loss(model, &mut g, &bound, batch, peers, lambda)?;
    let breakdown = LossBreakdown::read(&g, &vars, batch);
    let grads = g.backward(vars.total)?;
    let names: Vec<String> = model.trainable_named().into_iter().map(|(n, _)| n).collect();
    let grad_map: BTreeMap<String, Tensor> = names
        .into_iter()
        .zip(model.bound_trainable(&bound))
        .filter_map(|(n, v)| grads.get(v).map(|t| (n, t.clone())))
        .collect();
    adam.step(model.trainable_named_mut(), &grad_map);
    Ok(breakdown)
}
