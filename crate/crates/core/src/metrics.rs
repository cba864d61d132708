//! Biometric evaluation: ACC, AUC, EER and APCER/BPCER/ACER.
//!
//! Scores are live scores. A sample is accepted as bona fide when
//! `score >= threshold`; a score equal to the threshold is accepted.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub id: String,
    pub label: Label,
    pub family: Option<String>,
    pub score: f64,
    pub score_phys: f64,
    pub score_dig: f64,
}

impl ScoreRecord {
    /// Record with only a fused score, for metric computations.
    pub fn bare(score: f64, bona_fide: bool) -> Self {
        Self {
            id: String::new(),
            label: if bona_fide { Label::Live } else { Label::PhysicalAttack },
            family: None,
            score,
            score_phys: score,
            score_dig: score,
        }
    }

    pub fn is_bona_fide(&self) -> bool {
        self.label.is_bona_fide()
    }
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRates {
    pub threshold: f64,
    pub apcer: f64,
    pub bpcer: f64,
    pub acer: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub acc: f64,
    pub auc: f64,
    pub eer: f64,
    pub eer_threshold: f64,
    /// Rates at the fixed operating threshold.
    pub fixed: ErrorRates,
    /// Rates at the EER threshold.
    pub at_eer: ErrorRates,
    pub n_bona_fide: usize,
    pub n_attack: usize,
}

impl MetricsSummary {
    pub fn acer(&self) -> f64 {
        self.fixed.acer
    }
}

fn check_scores(records: &[ScoreRecord]) -> Result<()> {
    if let Some(r) = records.iter().find(|r| !(0.0..=1.0).contains(&r.score)) {
        return Err(Error::Input(format!("score {} of {:?} outside [0, 1]", r.score, r.id)));
    }
    Ok(())
}

/// Sorted bona fide and attack scores; both classes must be present.
fn partition(records: &[ScoreRecord]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_scores(records)?;
    let mut bona: Vec<f64> = records.iter().filter(|r| r.is_bona_fide()).map(|r| r.score).collect();
    let mut attack: Vec<f64> = records.iter().filter(|r| !r.is_bona_fide()).map(|r| r.score).collect();
    if bona.is_empty() || attack.is_empty() {
        return Err(Error::Input(format!(
            "need both classes, got {} bona fide and {} attack",
            bona.len(),
            attack.len()
        )));
    }
    bona.sort_by(f64::total_cmp);
    attack.sort_by(f64::total_cmp);
    Ok((bona, attack))
}

pub fn accuracy(records: &[ScoreRecord], threshold: f64) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Input("no records".into()));
    }
    check_scores(records)?;
    let correct = records
        .iter()
        .filter(|r| (r.score >= threshold) == r.is_bona_fide())
        .count();
    Ok(correct as f64 / records.len() as f64)
}

/// Probability that a random bona fide sample outscores a random attack, ties ½.
pub fn auc(records: &[ScoreRecord]) -> Result<f64> {
    let (bona, attack) = partition(records)?;
    let mut wins = 0.0;
    let (mut lo, mut hi) = (0, 0);
    for &b in &bona {
        while lo < attack.len() && attack[lo] < b {
            lo += 1;
        }
        hi = hi.max(lo);
        while hi < attack.len() && attack[hi] <= b {
            hi += 1;
        }
        wins += lo as f64 + 0.5 * (hi - lo) as f64;
    }
    Ok(wins / (bona.len() as f64 * attack.len() as f64))
}

/// Number of values in sorted `v` strictly below `t`.
fn count_below(v: &[f64], t: f64) -> usize {
    v.partition_point(|&x| x < t)
}

fn rates_sorted(bona: &[f64], attack: &[f64], threshold: f64) -> ErrorRates {
    let apcer = (attack.len() - count_below(attack, threshold)) as f64 / attack.len() as f64;
    let bpcer = count_below(bona, threshold) as f64 / bona.len() as f64;
    ErrorRates {
        threshold,
        apcer,
        bpcer,
        acer: (apcer + bpcer) / 2.0,
    }
}

pub fn acer(records: &[ScoreRecord], threshold: f64) -> Result<ErrorRates> {
    let (bona, attack) = partition(records)?;
    Ok(rates_sorted(&bona, &attack, threshold))
}

/// Operating points at every distinct score plus one threshold above all
/// scores, in increasing threshold order.
fn sweep(bona: &[f64], attack: &[f64]) -> Vec<ErrorRates> {
    let mut thresholds: Vec<f64> = bona.iter().chain(attack).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let top = *thresholds.last().expect("non-empty");
    thresholds.push(top.next_up());
    thresholds.into_iter().map(|t| rates_sorted(bona, attack, t)).collect()
}

/// ROC sweep `(threshold, apcer, bpcer)` for plotting.
pub fn roc_points(records: &[ScoreRecord]) -> Result<Vec<ErrorRates>> {
    let (bona, attack) = partition(records)?;
    Ok(sweep(&bona, &attack))
}

/// Equal error rate on the convex hull of the ROC sweep.
///
/// Hull vertices are joined by straight lines and the rate is read where
/// APCER equals BPCER; the threshold is interpolated with the same weight.
/// Returns `(rate, threshold)`.
pub fn eer(records: &[ScoreRecord]) -> Result<(f64, f64)> {
    let (bona, attack) = partition(records)?;
    let pts = sweep(&bona, &attack);
    // Points ordered by decreasing APCER / increasing BPCER; keep the lower
    // convex hull in (apcer, bpcer) space, where both errors are minimized.
    let mut hull: Vec<ErrorRates> = Vec::new();
    for p in pts {
        if let Some(last) = hull.last() {
            if (last.apcer - p.apcer).abs() == 0.0 && p.bpcer >= last.bpcer {
                continue;
            }
        }
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            // drop b unless it lies strictly below the segment a -> p
            let cross = (b.apcer - a.apcer) * (p.bpcer - a.bpcer) - (b.bpcer - a.bpcer) * (p.apcer - a.apcer);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    for w in hull.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (da, db) = (a.apcer - a.bpcer, b.apcer - b.bpcer);
        if da >= 0.0 && db <= 0.0 {
            let lambda = if da == db { 0.0 } else { da / (da - db) };
            let rate = a.apcer + lambda * (b.apcer - a.apcer);
            let threshold = a.threshold + lambda * (b.threshold - a.threshold);
            return Ok((rate, threshold));
        }
    }
    let p = hull.last().expect("hull is non-empty");
    Ok(((p.apcer + p.bpcer) / 2.0, p.threshold))
}

pub fn summarize(records: &[ScoreRecord], threshold: f64) -> Result<MetricsSummary> {
    let (eer_rate, eer_threshold) = eer(records)?;
    let n_bona_fide = records.iter().filter(|r| r.is_bona_fide()).count();
    Ok(MetricsSummary {
        acc: accuracy(records, threshold)?,
        auc: auc(records)?,
        eer: eer_rate,
        eer_threshold,
        fixed: acer(records, threshold)?,
        at_eer: acer(records, eer_threshold)?,
        n_bona_fide,
        n_attack: records.len() - n_bona_fide,
    })
}

/// One table row as percentages with two decimals: `"ACC AUC EER ACER"`.
pub fn format_rates(acc: f64, auc: f64, eer: f64, acer: f64) -> String {
    [acc, auc, eer, acer]
        .iter()
        .map(|v| format!("{:5.2}", v * 100.0))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Method/ACC/AUC/EER/ACER table; the evaluated model comes first.
pub fn report_table(name: &str, summary: &MetricsSummary, comparisons: &[(String, MetricsSummary)]) -> String {
    let rows: Vec<(&str, &MetricsSummary)> = std::iter::once((name, summary))
        .chain(comparisons.iter().map(|(n, s)| (n.as_str(), s)))
        .collect();
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max("Method".len());
    let mut out = format!("{:<width$}   ACC   AUC   EER  ACER\n", "Method");
    for (n, s) in rows {
        let _ = writeln!(out, "{n:<width$} {}", format_rates(s.acc, s.auc, s.eer, s.acer()));
    }
    out
}

pub fn write_roc_csv(path: &Path, points: &[ErrorRates]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["threshold", "apcer", "bpcer"]).map_err(|e| csv_err(path, e))?;
    for p in points {
        w.write_record([p.threshold.to_string(), p.apcer.to_string(), p.bpcer.to_string()])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        path: path.into(),
        msg: e.to_string(),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ScoreRow {
    id: String,
    label: String,
    family: String,
    score: f64,
    score_phys: f64,
    score_dig: f64,
}

pub fn write_scores_csv(path: &Path, records: &[ScoreRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in records {
        w.serialize(ScoreRow {
            id: r.id.clone(),
            label: r.label.token().into(),
            family: r.family.clone().unwrap_or_default(),
            score: r.score,
            score_phys: r.score_phys,
            score_dig: r.score_dig,
        })
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_scores_csv(path: &Path) -> Result<Vec<ScoreRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_scores_csv(file)
}

/// Score rows in the `write_scores_csv` layout from any reader.
pub fn parse_scores_csv<R: std::io::Read>(reader: R) -> Result<Vec<ScoreRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<ScoreRow>().enumerate() {
        let loader = |msg: String| Error::Loader { row: i + 1, msg };
        let row = row.map_err(|e| loader(e.to_string()))?;
        out.push(ScoreRecord {
            id: row.id,
            label: row.label.parse().map_err(loader)?,
            family: (!row.family.is_empty()).then_some(row.family),
            score: row.score,
            score_phys: row.score_phys,
            score_dig: row.score_dig,
        });
    }
    Ok(out)
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One ablation cell: module switches and the summaries of every seed.
#[derive(Debug, Clone)]
pub struct AblationCell {
    pub scpg: bool,
    pub caa: bool,
    pub runs: Vec<MetricsSummary>,
}

impl AblationCell {
    pub fn mean(&self, f: impl Fn(&MetricsSummary) -> f64) -> f64 {
        mean_std(&self.runs.iter().map(f).collect::<Vec<_>>()).0
    }
}

/// SCPG/CAA grid in the order baseline, SCPG only, CAA only, both; each cell
/// as `mean±std` percentages over seeds.
pub fn ablation_table(cells: &[AblationCell]) -> String {
    let mut out = String::from("SCPG CAA ACC          AUC          EER          ACER\n");
    let mark = |on: bool| if on { "yes" } else { "no" };
    for c in cells {
        let _ = write!(out, "{:<4} {:<3}", mark(c.scpg), mark(c.caa));
        let metrics: [fn(&MetricsSummary) -> f64; 4] = [|s| s.acc, |s| s.auc, |s| s.eer, |s| s.acer()];
        for f in metrics {
            let (m, s) = mean_std(&c.runs.iter().map(f).collect::<Vec<_>>());
            let _ = write!(out, " {:5.2}±{:<5.2}", m * 100.0, s * 100.0);
        }
        out.push('\n');
    }
    out
}
