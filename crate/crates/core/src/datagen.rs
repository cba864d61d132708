//! Synthetic live/physical/digital face corpus and the manifest loader.
//!
//! Every attack is `clamp(base + α·cue)` on the base image of a live sample,
//! so `α = 0` reproduces the live base exactly. Pixel values are quantized to
//! multiples of 1/255 at generation time, making the PPM round trip lossless.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompt::Branch;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Live,
    PhysicalAttack,
    DigitalAttack,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Live, Label::PhysicalAttack, Label::DigitalAttack];

    pub fn token(self) -> &'static str {
        match self {
            Label::Live => "live",
            Label::PhysicalAttack => "physical_attack",
            Label::DigitalAttack => "digital_attack",
        }
    }

    pub fn is_bona_fide(self) -> bool {
        self == Label::Live
    }

    /// Live samples train both branches; each attack trains only its own branch.
    pub fn legal_for(self, branch: Branch) -> bool {
        match self {
            Label::Live => true,
            Label::PhysicalAttack => branch == Branch::Physical,
            Label::DigitalAttack => branch == Branch::Digital,
        }
    }

    /// Class index within a branch's `[live, attack]` class set.
    pub fn branch_target(self) -> usize {
        usize::from(!self.is_bona_fide())
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Label::ALL
            .into_iter()
            .find(|l| l.token() == s)
            .ok_or_else(|| format!("unknown label {s:?}"))
    }
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    /// `[H, W, 3]` in `[0, 1]`.
    pub image: Tensor,
    pub label: Label,
    /// Present exactly for attacks.
    pub family: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub live: usize,
    pub physical: usize,
    pub digital: usize,
    pub image_size: usize,
    /// Cue strength in `[0, 1]`.
    pub alpha: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            live: 600,
            physical: 300,
            digital: 300,
            image_size: 32,
            alpha: 0.8,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.image_size < 8 {
            return Err(Error::Config(format!("image_size {} below 8", self.image_size)));
        }
        Ok(())
    }
}

pub const PHYSICAL_FAMILIES: [&str; 2] = ["replay", "print"];
pub const DIGITAL_FAMILIES: [&str; 2] = ["swap", "edit"];

fn quantize(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

/// Smooth background texture plus a Gaussian-blob face, before quantization.
fn live_base(size: usize, rng: &mut Rng) -> Vec<f64> {
    let s = size as f64;
    let bg: [f64; 3] = std::array::from_fn(|_| rng.uniform_range(0.2, 0.5));
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            let angle = rng.uniform_range(0.0, std::f64::consts::PI);
            let freq = rng.uniform_range(0.5, 1.5) * std::f64::consts::TAU / s;
            (angle.cos() * freq, angle.sin() * freq, rng.uniform_range(0.0, 6.3), rng.uniform_range(0.02, 0.05))
        })
        .collect();
    let (cx, cy) = (rng.uniform_range(0.4, 0.6) * s, rng.uniform_range(0.4, 0.6) * s);
    let (sx, sy) = (rng.uniform_range(0.18, 0.26) * s, rng.uniform_range(0.22, 0.3) * s);
    let skin = [
        rng.uniform_range(0.55, 0.85),
        rng.uniform_range(0.4, 0.65),
        rng.uniform_range(0.3, 0.55),
    ];
    let mut out = vec![0.0; size * size * 3];
    for y in 0..size {
        for x in 0..size {
            let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
            let tex: f64 = waves.iter().map(|(kx, ky, ph, a)| a * (kx * fx + ky * fy + ph).sin()).sum();
            let blob = (-0.5 * (((fx - cx) / sx).powi(2) + ((fy - cy) / sy).powi(2))).exp();
            for c in 0..3 {
                out[(y * size + x) * 3 + c] = bg[c] + tex + blob * (skin[c] - bg[c]);
            }
        }
    }
    out
}

/// Screen moiré: an oriented high-frequency grating with a colour tint.
fn moire_cue(size: usize, rng: &mut Rng) -> Vec<f64> {
    let angle = rng.uniform_range(0.0, std::f64::consts::PI);
    let period = rng.uniform_range(4.0, 6.0);
    let k = std::f64::consts::TAU / period;
    let (kx, ky) = (angle.cos() * k, angle.sin() * k);
    let phase = rng.uniform_range(0.0, 6.3);
    let tint = [rng.uniform_range(0.6, 1.0), rng.uniform_range(0.6, 1.0), 1.0];
    let mut out = vec![0.0; size * size * 3];
    for y in 0..size {
        for x in 0..size {
            let w = 0.3 * (kx * x as f64 + ky * y as f64 + phase).sin();
            for c in 0..3 {
                out[(y * size + x) * 3 + c] = w * tint[c];
            }
        }
    }
    out
}

/// Flat print: contrast loss toward a paper tone plus a halftone dot lattice.
fn print_cue(base: &[f64], size: usize, rng: &mut Rng) -> Vec<f64> {
    let paper = rng.uniform_range(0.55, 0.75);
    let pitch = 2 + rng.below(2);
    let mut out = vec![0.0; size * size * 3];
    for y in 0..size {
        for x in 0..size {
            let dot = if x % pitch == 0 && y % pitch == 0 { -0.18 } else { 0.06 };
            for c in 0..3 {
                let i = (y * size + x) * 3 + c;
                out[i] = 0.35 * (paper - base[i]) + dot;
            }
        }
    }
    out
}

/// Local checkerboard of 2-pixel cells on the even grid inside a soft-edged
/// disc near the face. Aligned cells survive a 2× box filter unchanged.
fn checker_cue(size: usize, rng: &mut Rng, edit: bool) -> Vec<f64> {
    let s = size as f64;
    let (cx, cy) = (rng.uniform_range(0.3, 0.7) * s, rng.uniform_range(0.3, 0.7) * s);
    let radius = rng.uniform_range(0.18, 0.28) * s;
    let amp = 0.35;
    let shift: [f64; 3] = if edit {
        [rng.uniform_range(-0.1, 0.1), rng.uniform_range(-0.1, 0.1), rng.uniform_range(-0.1, 0.1)]
    } else {
        [0.0; 3]
    };
    let mut out = vec![0.0; size * size * 3];
    for y in 0..size {
        for x in 0..size {
            let d = ((x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2)).sqrt();
            // smoothstep falloff over 3 pixels outside the radius
            let t = ((radius + 3.0 - d) / 3.0).clamp(0.0, 1.0);
            let mask = t * t * (3.0 - 2.0 * t);
            let sign = if (x / 2 + y / 2) % 2 == 0 { 1.0 } else { -1.0 };
            for c in 0..3 {
                out[(y * size + x) * 3 + c] = mask * (amp * sign + shift[c]);
            }
        }
    }
    out
}

fn finish(base: &[f64], cue: Option<(&[f64], f64)>, size: usize) -> Tensor {
    let data = match cue {
        Some((cue, alpha)) => base.iter().zip(cue).map(|(b, c)| quantize(b + alpha * c)).collect(),
        None => base.iter().map(|&b| quantize(b)).collect(),
    };
    Tensor::from_parts(vec![size, size, 3], data)
}

/// Generates live samples, then physical, then digital. Attack `j` of a kind
/// reuses the base of live sample `j mod n_live` (offset for digital attacks
/// so the two kinds pair with different subjects when counts allow).
pub fn generate(cfg: &SynthConfig) -> Result<Vec<Sample>> {
    cfg.validate()?;
    let size = cfg.image_size;
    let root = Rng::new(cfg.seed);
    let n_bases = cfg.live.max(1);
    let bases: Vec<Vec<f64>> = (0..n_bases)
        .map(|i| live_base(size, &mut root.derive(1_000_000 + i as u64)))
        .collect();
    let mut out = Vec::with_capacity(cfg.live + cfg.physical + cfg.digital);
    for (i, base) in bases.iter().enumerate().take(cfg.live) {
        out.push(Sample {
            id: format!("live_{i:05}"),
            image: finish(base, None, size),
            label: Label::Live,
            family: None,
        });
    }
    for j in 0..cfg.physical {
        let mut rng = root.derive(2_000_000 + j as u64);
        let base = &bases[j % n_bases];
        let family = PHYSICAL_FAMILIES[rng.below(2)];
        let cue = match family {
            "replay" => moire_cue(size, &mut rng),
            _ => print_cue(base, size, &mut rng),
        };
        out.push(Sample {
            id: format!("physical_{j:05}"),
            image: finish(base, Some((&cue, cfg.alpha)), size),
            label: Label::PhysicalAttack,
            family: Some(family.to_string()),
        });
    }
    for j in 0..cfg.digital {
        let mut rng = root.derive(3_000_000 + j as u64);
        let base = &bases[(cfg.physical + j) % n_bases];
        let family = DIGITAL_FAMILIES[rng.below(2)];
        let cue = checker_cue(size, &mut rng, family == "edit");
        out.push(Sample {
            id: format!("digital_{j:05}"),
            image: finish(base, Some((&cue, cfg.alpha)), size),
            label: Label::DigitalAttack,
            family: Some(family.to_string()),
        });
    }
    Ok(out)
}

/// One image of the given family on the subject drawn from `seed`, so the
/// same seed with different `alpha` or family shows the same face.
/// `family` is `None` for a live image.
pub fn render(family: Option<&str>, alpha: f64, size: usize, seed: u64) -> Result<Tensor> {
    if size == 0 {
        return Err(Error::Input("image size must be positive".into()));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Input(format!("alpha {alpha} outside [0, 1]")));
    }
    let root = Rng::new(seed);
    let base = live_base(size, &mut root.derive(1_000_000));
    let mut rng = root.derive(2_000_000);
    let cue = match family {
        None => return Ok(finish(&base, None, size)),
        Some("replay") => moire_cue(size, &mut rng),
        Some("print") => print_cue(&base, size, &mut rng),
        Some("swap") => checker_cue(size, &mut rng, false),
        Some("edit") => checker_cue(size, &mut rng, true),
        Some(other) => return Err(Error::Input(format!("unknown attack family {other:?}"))),
    };
    Ok(finish(&base, Some((&cue, alpha)), size))
}

/// Index of the live sample whose base image sample `index` of `generate`'s
/// output was built on; `None` when there is no live sample to pair with.
pub fn base_index(cfg: &SynthConfig, index: usize) -> Option<usize> {
    if cfg.live == 0 {
        return None;
    }
    if index < cfg.live {
        return Some(index);
    }
    let j = index - cfg.live;
    // digital attack j sits at physical + j in the base rotation
    Some(j % cfg.live)
}

pub fn write_image(path: &Path, image: &Tensor) -> Result<()> {
    let [h, w, 3] = image.shape() else {
        return Err(Error::Input(format!("image shape {:?} is not [H, W, 3]", image.shape())));
    };
    let bytes: Vec<u8> = image.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    image::save_buffer_with_format(
        path,
        &bytes,
        *w as u32,
        *h as u32,
        image::ExtendedColorType::Rgb8,
        image::ImageFormat::Pnm,
    )
    .map_err(|e| Error::Format {
        path: path.into(),
        msg: e.to_string(),
    })
}

pub fn read_image(path: &Path) -> Result<Tensor> {
    let mut reader = image::ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    reader.set_format(image::ImageFormat::Pnm);
    let img = reader
        .decode()
        .map_err(|e| Error::Format {
            path: path.into(),
            msg: e.to_string(),
        })?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|b| f64::from(b) / 255.0).collect();
    Tensor::new(&[h as usize, w as usize, 3], data)
}

pub const MANIFEST_FILE: &str = "manifest.csv";

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRow {
    id: String,
    path: String,
    label: String,
    family: String,
}

/// Writes `images/<id>.ppm` and `manifest.csv` under `dir`; returns the manifest path.
pub fn write_corpus(dir: &Path, samples: &[Sample]) -> Result<PathBuf> {
    let img_dir = dir.join("images");
    std::fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    let manifest = dir.join(MANIFEST_FILE);
    let mut w = csv::Writer::from_path(&manifest).map_err(|e| csv_err(&manifest, e))?;
    for s in samples {
        let rel = format!("images/{}.ppm", s.id);
        write_image(&dir.join(&rel), &s.image)?;
        w.serialize(ManifestRow {
            id: s.id.clone(),
            path: rel,
            label: s.label.token().into(),
            family: s.family.clone().unwrap_or_default(),
        })
        .map_err(|e| csv_err(&manifest, e))?;
    }
    w.flush().map_err(|e| Error::io(&manifest, e))?;
    Ok(manifest)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        path: path.into(),
        msg: e.to_string(),
    }
}

/// Loads samples in manifest order. Image paths are relative to the manifest's
/// directory. `image_size`, when given, is enforced on every image.
pub fn load_manifest(path: &Path, image_size: Option<usize>) -> Result<Vec<Sample>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let root = path.parent().unwrap_or(Path::new("."));
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["id", "path", "label", "family"] {
        return Err(Error::Format {
            path: path.into(),
            msg: format!("header must be id,path,label,family, found {}", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<ManifestRow>().enumerate() {
        let row = i + 1;
        let loader = |msg: String| Error::Loader { row, msg };
        let rec = rec.map_err(|e| loader(e.to_string()))?;
        let label: Label = rec.label.parse().map_err(loader)?;
        let family = (!rec.family.is_empty()).then_some(rec.family);
        if label.is_bona_fide() == family.is_some() {
            return Err(loader(format!("label {label} with family {family:?}")));
        }
        let image = read_image(&root.join(&rec.path)).map_err(|e| loader(e.to_string()))?;
        if let Some(s) = image_size {
            if image.shape() != [s, s, 3] {
                return Err(loader(format!("image {:?} is {:?}, expected [{s}, {s}, 3]", rec.path, image.shape())));
            }
        }
        out.push(Sample {
            id: rec.id,
            image,
            label,
            family,
        });
    }
    Ok(out)
}

/// Stratified split; returns `(train, eval)` index lists in ascending order.
pub fn split_indices(labels: &[Label], train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Split(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    let mut train = Vec::new();
    let mut eval = Vec::new();
    for (k, label) in Label::ALL.into_iter().enumerate() {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == label).collect();
        if idx.is_empty() {
            continue;
        }
        if idx.len() < 2 {
            return Err(Error::Split(format!("class {label} has {} sample", idx.len())));
        }
        Rng::new(seed).derive(k as u64).shuffle(&mut idx);
        let n_train = ((idx.len() as f64 * train_fraction).round() as usize).clamp(1, idx.len() - 1);
        train.extend_from_slice(&idx[..n_train]);
        eval.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    eval.sort_unstable();
    Ok((train, eval))
}

pub fn split(samples: &[Sample], train_fraction: f64, seed: u64) -> Result<(Vec<Sample>, Vec<Sample>)> {
    let labels: Vec<Label> = samples.iter().map(|s| s.label).collect();
    let (tr, ev) = split_indices(&labels, train_fraction, seed)?;
    Ok((
        tr.into_iter().map(|i| samples[i].clone()).collect(),
        ev.into_iter().map(|i| samples[i].clone()).collect(),
    ))
}
