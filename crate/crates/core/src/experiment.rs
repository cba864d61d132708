//! Corpus preparation and complete runs, shared by the command line and the
//! ablation harness.

use std::path::Path;

use crate::config::ExperimentConfig;
use crate::datagen::{generate, load_manifest, split, Sample};
use crate::error::{Error, Result};
use crate::metrics::{AblationCell, MetricsSummary};
use crate::prompt::PromptedModel;
use crate::trainer::{run_training, TrainOutcome};

/// Ablation grid in table order: baseline, SCPG only, CAA only, both.
pub const ABLATION_GRID: [(bool, bool); 4] = [(false, false), (true, false), (false, true), (true, true)];

impl ExperimentConfig {
    /// Same experiment under another seed: training, prompt init, corpus and split.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut cfg = self.clone();
        cfg.train.seed = seed;
        cfg.synth.seed = seed;
        cfg
    }

    pub fn with_modules(&self, scpg: bool, caa: bool) -> Self {
        let mut cfg = self.clone();
        cfg.train.scpg_on = scpg;
        cfg.train.caa_on = caa;
        cfg
    }
}

/// The configured manifest, or the synthetic corpus when none is given.
pub fn load_corpus(cfg: &ExperimentConfig) -> Result<Vec<Sample>> {
    match &cfg.data.manifest {
        Some(path) => load_manifest(path, Some(cfg.encoder.image_size)),
        None => generate(&cfg.synth),
    }
}

/// Stratified train/eval split seeded by the training seed.
pub fn split_corpus(cfg: &ExperimentConfig, samples: &[Sample]) -> Result<(Vec<Sample>, Vec<Sample>)> {
    split(samples, cfg.data.train_fraction, cfg.train.seed)
}

pub struct RunResult {
    pub model: PromptedModel,
    pub outcome: TrainOutcome,
    pub train: Vec<Sample>,
    pub eval: Vec<Sample>,
}

/// Builds, trains and evaluates one model.
pub fn run_experiment(cfg: &ExperimentConfig, log: Option<&Path>) -> Result<RunResult> {
    cfg.validate()?;
    let samples = load_corpus(cfg)?;
    let (train, eval) = split_corpus(cfg, &samples)?;
    let mut model = cfg.build_model()?;
    let outcome = run_training(&mut model, &train, &eval, &cfg.train, log)?;
    Ok(RunResult {
        model,
        outcome,
        train,
        eval,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AblationJob {
    pub seed: u64,
    pub scpg: bool,
    pub caa: bool,
}

/// Every (seed, cell) pair, seed-major.
pub fn ablation_jobs(seeds: &[u64]) -> Vec<AblationJob> {
    seeds
        .iter()
        .flat_map(|&seed| ABLATION_GRID.iter().map(move |&(scpg, caa)| AblationJob { seed, scpg, caa }))
        .collect()
}

pub fn run_ablation_job(base: &ExperimentConfig, job: AblationJob) -> Result<MetricsSummary> {
    let cfg = base.with_seed(job.seed).with_modules(job.scpg, job.caa);
    run_experiment(&cfg, None)?
        .outcome
        .final_eval
        .ok_or_else(|| Error::Input("evaluation split is empty".into()))
}

/// Groups job results into the four grid cells; runs keep job order.
pub fn ablation_cells(results: &[(AblationJob, MetricsSummary)]) -> Vec<AblationCell> {
    ABLATION_GRID
        .iter()
        .map(|&(scpg, caa)| AblationCell {
            scpg,
            caa,
            runs: results
                .iter()
                .filter(|(j, _)| j.scpg == scpg && j.caa == caa)
                .map(|(_, s)| s.clone())
                .collect(),
        })
        .collect()
}

/// Direction of the module ablation, on means over seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AblationTrend {
    pub auc: [f64; 3],
    pub acer: [f64; 3],
}

impl AblationTrend {
    /// `auc = [full, SCPG only, baseline]`, `acer = [full, CAA only, baseline]`.
    pub fn from_cells(cells: &[AblationCell]) -> Result<Self> {
        let find = |scpg: bool, caa: bool| {
            cells
                .iter()
                .find(|c| c.scpg == scpg && c.caa == caa && !c.runs.is_empty())
                .ok_or_else(|| Error::Input(format!("ablation cell scpg={scpg} caa={caa} has no runs")))
        };
        let (base, scpg, caa, full) = (find(false, false)?, find(true, false)?, find(false, true)?, find(true, true)?);
        Ok(Self {
            auc: [full.mean(|s| s.auc), scpg.mean(|s| s.auc), base.mean(|s| s.auc)],
            acer: [full.mean(|s| s.acer()), caa.mean(|s| s.acer()), base.mean(|s| s.acer())],
        })
    }

    pub fn auc_ordered(&self) -> bool {
        self.auc[0] >= self.auc[1] && self.auc[1] >= self.auc[2]
    }

    pub fn acer_ordered(&self) -> bool {
        self.acer[0] <= self.acer[1] && self.acer[1] <= self.acer[2]
    }
}
