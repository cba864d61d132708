//! Plain-Rust side of the demo. Everything here runs natively and is what the
//! wasm bindings call into; errors are strings for the JavaScript side.

use spoofprompt::datagen::{render, Label};
use spoofprompt::metrics::{self, parse_scores_csv, ErrorRates, ScoreRecord};
use spoofprompt::prompt::{kmeans, KMeansResult};
use spoofprompt::{Rng, Tensor};

pub type DemoResult<T> = Result<T, String>;

/// Families accepted by [`synthetic_rgba`]; "live" has no cue.
pub const FAMILIES: [&str; 5] = ["live", "replay", "print", "swap", "edit"];

/// RGBA bytes (row-major, `size × size × 4`) of one synthetic face.
pub fn synthetic_rgba(family: &str, alpha: f64, seed: u64, size: usize) -> DemoResult<Vec<u8>> {
    let fam = (family != "live").then_some(family);
    let image = render(fam, alpha, size, seed).map_err(|e| e.to_string())?;
    Ok(image
        .data()
        .chunks(3)
        .flat_map(|px| [to_byte(px[0]), to_byte(px[1]), to_byte(px[2]), 255])
        .collect())
}

fn to_byte(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Score set with its threshold sweep, for interactive exploration.
pub struct Scores {
    records: Vec<ScoreRecord>,
    roc: Vec<ErrorRates>,
    auc: f64,
    eer: (f64, f64),
}

impl Scores {
    pub fn new(records: Vec<ScoreRecord>) -> DemoResult<Self> {
        let err = |e: spoofprompt::Error| e.to_string();
        Ok(Self {
            roc: metrics::roc_points(&records).map_err(err)?,
            auc: metrics::auc(&records).map_err(err)?,
            eer: metrics::eer(&records).map_err(err)?,
            records,
        })
    }

    /// Bona fide and attack scores from two logistic-normal populations whose
    /// logit means are `separation` apart.
    pub fn synthetic(separation: f64, n_bona_fide: usize, n_attack: usize, seed: u64) -> DemoResult<Self> {
        if !separation.is_finite() {
            return Err("separation must be finite".into());
        }
        let mut rng = Rng::new(seed);
        let mut draw = |mean: f64| 1.0 / (1.0 + (-(mean + rng.normal())).exp());
        let mut records = Vec::with_capacity(n_bona_fide + n_attack);
        for i in 0..n_bona_fide {
            records.push(ScoreRecord {
                id: format!("b{i}"),
                ..ScoreRecord::bare(draw(separation / 2.0), true)
            });
        }
        for i in 0..n_attack {
            let label = if i % 2 == 0 { Label::PhysicalAttack } else { Label::DigitalAttack };
            records.push(ScoreRecord {
                id: format!("a{i}"),
                label,
                ..ScoreRecord::bare(draw(-separation / 2.0), false)
            });
        }
        Self::new(records)
    }

    /// Parses a `scores.csv` written by the command line.
    pub fn from_csv(text: &str) -> DemoResult<Self> {
        Self::new(parse_scores_csv(text.as_bytes()).map_err(|e| e.to_string())?)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn auc(&self) -> f64 {
        self.auc
    }

    pub fn eer(&self) -> f64 {
        self.eer.0
    }

    pub fn eer_threshold(&self) -> f64 {
        self.eer.1
    }

    /// `[apcer, bpcer]` pairs of the sweep, flattened.
    pub fn roc(&self) -> Vec<f64> {
        self.roc.iter().flat_map(|r| [r.apcer, r.bpcer]).collect()
    }

    /// `[acc, apcer, bpcer, acer]` at `threshold`.
    pub fn at(&self, threshold: f64) -> Vec<f64> {
        let rates = metrics::acer(&self.records, threshold).expect("records validated at construction");
        let acc = metrics::accuracy(&self.records, threshold).expect("records validated at construction");
        vec![acc, rates.apcer, rates.bpcer, rates.acer]
    }

    /// Scores with their labels as `[score, is_bona_fide]` pairs, flattened.
    pub fn points(&self) -> Vec<f64> {
        self.records
            .iter()
            .flat_map(|r| [r.score, if r.is_bona_fide() { 1.0 } else { 0.0 }])
            .collect()
    }
}

/// `k` Gaussian blobs of `per_cluster` 2-D points with std `spread`,
/// centers evenly spaced on a circle of radius 1. Flattened `[x, y]` pairs.
pub fn planted_points(k: usize, per_cluster: usize, spread: f64, seed: u64) -> Vec<f64> {
    let mut rng = Rng::new(seed);
    let mut out = Vec::with_capacity(2 * k * per_cluster);
    for c in 0..k {
        let a = std::f64::consts::TAU * c as f64 / k as f64;
        for _ in 0..per_cluster {
            out.push(a.cos() + spread * rng.normal());
            out.push(a.sin() + spread * rng.normal());
        }
    }
    out
}

/// K-Means over flattened 2-D points.
pub fn cluster_points(points: &[f64], k: usize, seed: u64) -> DemoResult<KMeansResult> {
    if points.len() % 2 != 0 {
        return Err("points must be [x, y] pairs".into());
    }
    let t = Tensor::new(&[points.len() / 2, 2], points.to_vec()).map_err(|e| e.to_string())?;
    kmeans(&t, k, seed).map_err(|e| e.to_string())
}
