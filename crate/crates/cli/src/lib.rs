//! `spoofprompt` command line: synth | train | eval | cluster | ablate | report.
//!
//! Every command writes one run directory (see [`rundir`]) and prints a short
//! summary on stdout. Errors print as a single `error[CODE]: message` line.

pub mod error;
pub mod rundir;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use spoofprompt::config::ExperimentConfig;
use spoofprompt::datagen::{load_manifest, write_corpus};
use spoofprompt::experiment::{
    ablation_cells, ablation_jobs, load_corpus, run_ablation_job, split_corpus, AblationJob,
    AblationTrend,
};
use spoofprompt::metrics::{
    ablation_table, read_scores_csv, report_table, roc_points, summarize, write_roc_csv, write_scores_csv,
    MetricsSummary, ScoreRecord,
};
use spoofprompt::prompt::PromptedModel;
use spoofprompt::trainer::{evaluate, run_training};

pub use error::{CliError, CliResult};
use rundir::RunDir;

/// Environment variable capping worker threads for parallel commands.
pub const THREADS_ENV: &str = "SPLUAD_THREADS";

#[derive(Debug, Parser)]
#[command(name = "spoofprompt", version, about = "Spoof-aware prompt learning for unified face attack detection")]
pub struct Cli {
    /// Experiment configuration (TOML). Built-in toy defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Overrides the training, prompt-initialization, corpus and split seed.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,

    /// Run directory. Defaults to `runs/<command>-seed<N>`.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Replace an existing run directory.
    #[arg(long, global = true)]
    pub force: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus (PPM images plus manifest.csv).
    Synth(SynthArgs),
    /// Train prompts, context projections and evaluate on the held-out split.
    Train(TrainArgs),
    /// Score a corpus with a trained model.
    Eval(EvalArgs),
    /// Dump the spoofing-context clustering of the class descriptions.
    Cluster(ClusterArgs),
    /// Run the SCPG x CAA grid over several seeds.
    Ablate(AblateArgs),
    /// Format metrics tables from score files.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub live: Option<usize>,
    #[arg(long)]
    pub physical: Option<usize>,
    #[arg(long)]
    pub digital: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Disable spoofing-context tokens (K forced to 0).
    #[arg(long)]
    pub no_scpg: bool,
    /// Disable disagreement-driven hard-sample augmentation.
    #[arg(long)]
    pub no_caa: bool,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Corpus manifest; the configured synthetic corpus when omitted.
    #[arg(long, value_name = "MANIFEST")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub eval_every: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model directory written by `train` (its `model/` subdirectory or the run itself).
    #[arg(long, value_name = "DIR")]
    pub model: PathBuf,
    /// Manifest to score in full; the configured corpus's eval split when omitted.
    #[arg(long, value_name = "MANIFEST")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// Trained model directory; a freshly initialized model when omitted.
    #[arg(long, value_name = "DIR")]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    pub seeds: Vec<u64>,
    /// Cue strength of the synthetic corpus; the configured value when omitted.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Score file (scores.csv) of the method being reported.
    #[arg(long, value_name = "CSV")]
    pub scores: PathBuf,
    #[arg(long, default_value = "Ours")]
    pub name: String,
    /// Comparison rows as NAME=CSV, repeatable.
    #[arg(long = "compare", value_name = "NAME=CSV")]
    pub compare: Vec<String>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Cluster(_) => "cluster",
            Command::Ablate(_) => "ablate",
            Command::Report(_) => "report",
        }
    }
}

fn load_config(cli: &Cli) -> CliResult<ExperimentConfig> {
    let cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    Ok(match cli.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

/// Worker count from `SPLUAD_THREADS`; `None` leaves the pool at its default.
pub fn thread_cap() -> CliResult<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
        Err(_) => Ok(None),
    }
}

fn metrics_toml(summary: &MetricsSummary) -> String {
    toml::to_string(summary).expect("summary serializes")
}

fn summary_line(s: &MetricsSummary) -> String {
    format!(
        "ACC {:.2}  AUC {:.2}  EER {:.2}  ACER {:.2}  (n = {} bona fide, {} attack)",
        s.acc * 100.0,
        s.auc * 100.0,
        s.eer * 100.0,
        s.acer() * 100.0,
        s.n_bona_fide,
        s.n_attack
    )
}

/// Writes scores, ROC sweep, metrics and the one-row report table.
fn write_evaluation(run: &RunDir, name: &str, records: &[ScoreRecord], summary: &MetricsSummary) -> CliResult<()> {
    write_scores_csv(&run.join("scores.csv"), records)?;
    write_roc_csv(&run.join("roc.csv"), &roc_points(records)?)?;
    run.write("metrics.toml", metrics_toml(summary))?;
    run.write("report.txt", report_table(name, summary, &[]))?;
    Ok(())
}

/// Runs one parsed command and returns the text printed on success.
pub fn run(cli: Cli) -> CliResult<String> {
    let cfg = load_config(&cli)?;
    let seed = cfg.train.seed;
    let command = cli.command.name();
    let out = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(format!("{command}-seed{seed}")));
    match &cli.command {
        Command::Report(args) => report(&out, cli.force, args, cfg.train.threshold),
        Command::Synth(args) => synth(&out, cli.force, cfg, args),
        Command::Train(args) => train(&out, cli.force, cfg, args),
        Command::Eval(args) => eval(&out, cli.force, cfg, args),
        Command::Cluster(args) => cluster(&out, cli.force, cfg, args),
        Command::Ablate(args) => ablate(&out, cli.force, cfg, args),
    }
}

fn synth(out: &Path, force: bool, mut cfg: ExperimentConfig, args: &SynthArgs) -> CliResult<String> {
    let s = &mut cfg.synth;
    s.alpha = args.alpha.unwrap_or(s.alpha);
    s.live = args.live.unwrap_or(s.live);
    s.physical = args.physical.unwrap_or(s.physical);
    s.digital = args.digital.unwrap_or(s.digital);
    cfg.validate()?;
    let samples = spoofprompt::datagen::generate(&cfg.synth)?;
    let run = RunDir::create(out, force)?;
    let manifest = write_corpus(run.path(), &samples)?;
    run.write("config.toml", cfg.to_toml())?;
    run.seal("synth", cfg.synth.seed)?;
    Ok(format!("wrote {} samples to {}\n", samples.len(), manifest.display()))
}

fn train(out: &Path, force: bool, mut cfg: ExperimentConfig, args: &TrainArgs) -> CliResult<String> {
    cfg.train.scpg_on &= !args.no_scpg;
    cfg.train.caa_on &= !args.no_caa;
    cfg.train.steps = args.steps.unwrap_or(cfg.train.steps);
    cfg.train.eval_every = args.eval_every.unwrap_or(cfg.train.eval_every);
    if let Some(d) = &args.data {
        cfg.data.manifest = Some(d.clone());
    }
    cfg.validate()?;
    // inputs are loaded before the run directory exists, so bad data leaves nothing behind
    let (train_set, eval_set) = split_corpus(&cfg, &load_corpus(&cfg)?)?;
    let mut model = cfg.build_model()?;
    let run = RunDir::create(out, force)?;
    run.write("config.toml", cfg.to_toml())?;
    let o = run_training(&mut model, &train_set, &eval_set, &cfg.train, Some(&run.join("train.log")))?;
    model.save(&run.join("model"))?;
    let (records, summary) = evaluate(&model, &eval_set, cfg.train.threshold)?;
    write_evaluation(&run, "Ours", &records, &summary)?;
    run.seal("train", cfg.train.seed)?;
    Ok(format!(
        "trained {} steps on {} samples; backbone checksum {:016x} (unchanged: {})\n{}\nrun directory: {}\n",
        o.records.len(),
        train_set.len(),
        o.backbone_checksum_after,
        o.backbone_checksum_before == o.backbone_checksum_after,
        summary_line(&summary),
        out.display()
    ))
}

fn model_dir(path: &Path) -> PathBuf {
    let nested = path.join("model");
    if nested.join("model.toml").exists() {
        nested
    } else {
        path.to_path_buf()
    }
}

fn eval(out: &Path, force: bool, cfg: ExperimentConfig, args: &EvalArgs) -> CliResult<String> {
    let model = PromptedModel::load(&model_dir(&args.model))?;
    let threshold = args.threshold.unwrap_or(cfg.train.threshold);
    let samples = match &args.data {
        Some(m) => load_manifest(m, Some(model.encoder().image_size))?,
        None => split_corpus(&cfg, &load_corpus(&cfg)?)?.1,
    };
    let (records, summary) = evaluate(&model, &samples, threshold)?;
    let run = RunDir::create(out, force)?;
    write_evaluation(&run, "Ours", &records, &summary)?;
    run.seal("eval", cfg.train.seed)?;
    Ok(format!("{}\nrun directory: {}\n", summary_line(&summary), out.display()))
}

fn cluster(out: &Path, force: bool, cfg: ExperimentConfig, args: &ClusterArgs) -> CliResult<String> {
    let model = match &args.model {
        Some(p) => PromptedModel::load(&model_dir(p))?,
        None => cfg.build_model()?,
    };
    let bank = model
        .bank
        .as_ref()
        .ok_or_else(|| CliError::Usage("model has no context tokens (K = 0)".into()))?;
    let embeddings = model.clip.class_embeddings(&model.classes)?;
    let names: Vec<String> = model.classes.classes.iter().map(|c| c.name.clone()).collect();
    let text = bank.report(&embeddings, &names);
    let run = RunDir::create(out, force)?;
    run.write("clusters.tsv", &text)?;
    run.seal("cluster", cfg.train.seed)?;
    Ok(text)
}

fn ablate(out: &Path, force: bool, mut cfg: ExperimentConfig, args: &AblateArgs) -> CliResult<String> {
    if args.seeds.is_empty() {
        return Err(CliError::Usage("--seeds needs at least one seed".into()));
    }
    cfg.synth.alpha = args.alpha.unwrap_or(cfg.synth.alpha);
    cfg.train.steps = args.steps.unwrap_or(cfg.train.steps);
    cfg.validate()?;
    let run = RunDir::create(out, force)?;
    run.write("config.toml", cfg.to_toml())?;

    let jobs = ablation_jobs(&args.seeds);
    let work = || -> Vec<spoofprompt::Result<MetricsSummary>> {
        jobs.par_iter().map(|&job| run_ablation_job(&cfg, job)).collect()
    };
    // collect() keeps job order, so the merge is independent of scheduling
    let outcomes = match thread_cap()? {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let mut results: Vec<(AblationJob, MetricsSummary)> = Vec::with_capacity(jobs.len());
    for (job, r) in jobs.iter().zip(outcomes) {
        results.push((*job, r?));
    }

    let mut csv = String::from("seed,scpg,caa,acc,auc,eer,acer\n");
    for (j, s) in &results {
        let _ = writeln!(csv, "{},{},{},{},{},{},{}", j.seed, j.scpg, j.caa, s.acc, s.auc, s.eer, s.acer());
    }
    run.write("ablation.csv", csv)?;
    let cells = ablation_cells(&results);
    let table = ablation_table(&cells);
    run.write("ablation.txt", &table)?;
    let trend = AblationTrend::from_cells(&cells)?;
    let trend_text = format!(
        "auc_full = {}\nauc_scpg_only = {}\nauc_baseline = {}\nauc_ordered = {}\nacer_full = {}\nacer_caa_only = {}\nacer_baseline = {}\nacer_ordered = {}\n",
        trend.auc[0],
        trend.auc[1],
        trend.auc[2],
        trend.auc_ordered(),
        trend.acer[0],
        trend.acer[1],
        trend.acer[2],
        trend.acer_ordered()
    );
    run.write("trend.toml", &trend_text)?;
    run.seal("ablate", cfg.train.seed)?;
    Ok(format!(
        "{table}AUC full >= SCPG-only >= baseline: {}\nACER full <= CAA-only <= baseline: {}\n",
        trend.auc_ordered(),
        trend.acer_ordered()
    ))
}

fn parse_compare(arg: &str) -> CliResult<(String, PathBuf)> {
    match arg.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => Err(CliError::Usage(format!("--compare expects NAME=CSV, got {arg:?}"))),
    }
}

fn report(out: &Path, force: bool, args: &ReportArgs, default_threshold: f64) -> CliResult<String> {
    let threshold = args.threshold.unwrap_or(default_threshold);
    let main = summarize(&read_scores_csv(&args.scores)?, threshold)?;
    let mut comparisons = Vec::new();
    for arg in &args.compare {
        let (name, path) = parse_compare(arg)?;
        comparisons.push((name, summarize(&read_scores_csv(&path)?, threshold)?));
    }
    let table = report_table(&args.name, &main, &comparisons);
    let run = RunDir::create(out, force)?;
    run.write("report.txt", &table)?;
    run.write("metrics.toml", metrics_toml(&main))?;
    run.seal("report", 0)?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compare_spec_parsing() {
        assert_eq!(parse_compare("Base=a/b.csv").unwrap(), ("Base".into(), PathBuf::from("a/b.csv")));
        assert!(matches!(parse_compare("nope"), Err(CliError::Usage(_))));
        assert!(matches!(parse_compare("=x"), Err(CliError::Usage(_))));
    }

    #[test]
    fn global_flags_parse_after_subcommand() {
        let cli = Cli::try_parse_from(["spoofprompt", "train", "--no-caa", "--seed", "4", "--force"]).unwrap();
        assert_eq!(cli.seed, Some(4));
        assert!(cli.force);
        assert!(matches!(cli.command, Command::Train(TrainArgs { no_caa: true, no_scpg: false, .. })));
    }

    #[test]
    fn seeds_are_comma_separated() {
        let cli = Cli::try_parse_from(["spoofprompt", "ablate", "--seeds", "3,5"]).unwrap();
        match cli.command {
            Command::Ablate(a) => assert_eq!(a.seeds, vec![3, 5]),
            _ => unreachable!(),
        }
    }
}
