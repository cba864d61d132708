use std::fs::File;
use std::io::Write as _;
use std::path::Path;

use crate::datagen::Sample;
use crate::error::{Error, Result};
use crate::metrics::{summarize, MetricsSummary, ScoreRecord};
use crate::prompt::PromptedModel;
use crate::rng::Rng;
use crate::trainer::adam::Adam;
use crate::trainer::config::TrainConfig;
use crate::trainer::step::{prepare_batch, train_step, LossBreakdown, Peers};

/// Columns of the training log, tab separated, one record per step.
/// Evaluation columns hold `-` on steps without an evaluation.
pub const LOG_COLUMNS: [&str; 11] = [
    "step",
    "ce_physical",
    "ce_digital",
    "consistency_text",
    "consistency_visual",
    "total",
    "n_hard",
    "eval_acc",
    "eval_auc",
    "eval_eer",
    "eval_acer",
];

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// 1-based.
    pub step: usize,
    pub loss: LossBreakdown,
    pub eval: Option<MetricsSummary>,
}

impl StepRecord {
    pub fn to_line(&self) -> String {
        let l = &self.loss;
        let mut cols = vec![
            self.step.to_string(),
            l.ce_physical.to_string(),
            l.ce_digital.to_string(),
            l.consistency_text.to_string(),
            l.consistency_visual.to_string(),
            l.total.to_string(),
            l.n_hard.to_string(),
        ];
        match &self.eval {
            Some(e) => cols.extend([e.acc, e.auc, e.eer, e.acer()].map(|v| v.to_string())),
            None => cols.extend(["-"; 4].map(String::from)),
        }
        cols.join("\t")
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub records: Vec<StepRecord>,
    pub final_eval: Option<MetricsSummary>,
    pub backbone_checksum_before: u64,
    pub backbone_checksum_after: u64,
}

/// Sample indices of every batch: consecutive slices of per-epoch seeded
/// permutations, a short final slice of an epoch included.
pub fn batch_order(n: usize, batch_size: usize, steps: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(steps);
    let mut epoch = 0u64;
    while out.len() < steps && n > 0 {
        let mut perm: Vec<usize> = (0..n).collect();
        Rng::new(seed).derive(0xe90c_0000 + epoch).shuffle(&mut perm);
        for chunk in perm.chunks(batch_size) {
            if out.len() == steps {
                break;
            }
            out.push(chunk.to_vec());
        }
        epoch += 1;
    }
    out
}

/// Fused scores for every sample and the metric summary at `threshold`.
pub fn evaluate(model: &PromptedModel, samples: &[Sample], threshold: f64) -> Result<(Vec<ScoreRecord>, MetricsSummary)> {
    let images: Vec<_> = samples.iter().map(|s| s.image.clone()).collect();
    let scores = model.score_images(&images)?;
    let records: Vec<ScoreRecord> = samples
        .iter()
        .zip(scores)
        .map(|(s, f)| ScoreRecord {
            id: s.id.clone(),
            label: s.label,
            family: s.family.clone(),
            score: f.live,
            score_phys: f.physical,
            score_dig: f.digital,
        })
        .collect();
    let summary = summarize(&records, threshold)?;
    Ok((records, summary))
}

/// Trains `model` in place. Writes the header and one line per step to `log`
/// when given; evaluates on `eval` every `eval_every` steps and after the last.
pub fn run_training(
    model: &mut PromptedModel,
    train: &[Sample],
    eval: &[Sample],
    cfg: &TrainConfig,
    log: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() && cfg.steps > 0 {
        return Err(Error::Input("empty training set".into()));
    }
    let mut log_file = match log {
        Some(p) => {
            let mut f = File::create(p).map_err(|e| Error::io(p, e))?;
            writeln!(f, "{}", LOG_COLUMNS.join("\t")).map_err(|e| Error::io(p, e))?;
            Some((p, f))
        }
        None => None,
    };
    let checksum_before = model.clip.backbone.checksum();
    let peers = Peers::compute(model)?;
    let mut adam = Adam::new(cfg.learning_rate);
    let mut records = Vec::with_capacity(cfg.steps);
    let mut final_eval = None;
    let order = batch_order(train.len(), cfg.batch_size, cfg.steps, cfg.seed);
    for (i, idx) in order.iter().enumerate() {
        let step = i + 1;
        let samples: Vec<&Sample> = idx.iter().map(|&j| &train[j]).collect();
        let rng = Rng::new(cfg.seed).derive(step as u64);
        let batch = prepare_batch(model, &samples, cfg, &rng)?;
        let loss = train_step(model, &batch, &peers, &mut adam, cfg.lambda_cons)?;
        let due = step == cfg.steps || (cfg.eval_every > 0 && step % cfg.eval_every == 0);
        let eval_summary = if due && !eval.is_empty() {
            Some(evaluate(model, eval, cfg.threshold)?.1)
        } else {
            None
        };
        if step == cfg.steps {
            final_eval = eval_summary;
        }
        let record = StepRecord {
            step,
            loss,
            eval: eval_summary,
        };
        if let Some((p, f)) = &mut log_file {
            writeln!(f, "{}", record.to_line()).map_err(|e| Error::io(*p, e))?;
        }
        records.push(record);
    }
    if cfg.steps == 0 && !eval.is_empty() {
        final_eval = Some(evaluate(model, eval, cfg.threshold)?.1);
    }
    Ok(TrainOutcome {
        records,
        final_eval,
        backbone_checksum_before: checksum_before,
        backbone_checksum_after: model.clip.backbone.checksum(),
    })
}
