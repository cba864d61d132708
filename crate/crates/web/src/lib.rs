//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Three interactive pieces: a synthetic face whose spoof cue strength follows
//! a slider, a ROC/EER explorer with a movable threshold, and 2-D K-Means.

pub mod demo;

use wasm_bindgen::prelude::*;

/// RGBA pixels of one synthetic face; `family` is one of
/// `live`, `replay`, `print`, `swap`, `edit`.
#[wasm_bindgen(js_name = syntheticImage)]
pub fn synthetic_image(family: &str, alpha: f64, seed: u32, size: u32) -> Result<Vec<u8>, JsError> {
    demo::synthetic_rgba(family, alpha, seed as u64, size as usize).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub struct ScoreExplorer {
    inner: demo::Scores,
}

#[wasm_bindgen]
impl ScoreExplorer {
    /// Two synthetic score populations `separation` logits apart.
    #[wasm_bindgen(constructor)]
    pub fn new(separation: f64, n_bona_fide: u32, n_attack: u32, seed: u32) -> Result<ScoreExplorer, JsError> {
        demo::Scores::synthetic(separation, n_bona_fide as usize, n_attack as usize, seed as u64)
            .map(|inner| ScoreExplorer { inner })
            .map_err(|e| JsError::new(&e))
    }

    /// Loads a `scores.csv` produced by `spoofprompt train` or `eval`.
    #[wasm_bindgen(js_name = fromCsv)]
    pub fn from_csv(text: &str) -> Result<ScoreExplorer, JsError> {
        demo::Scores::from_csv(text)
            .map(|inner| ScoreExplorer { inner })
            .map_err(|e| JsError::new(&e))
    }

    pub fn auc(&self) -> f64 {
        self.inner.auc()
    }

    pub fn eer(&self) -> f64 {
        self.inner.eer()
    }

    #[wasm_bindgen(js_name = eerThreshold)]
    pub fn eer_threshold(&self) -> f64 {
        self.inner.eer_threshold()
    }

    /// Flattened `[apcer, bpcer]` sweep.
    pub fn roc(&self) -> Vec<f64> {
        self.inner.roc()
    }

    /// `[acc, apcer, bpcer, acer]` at a threshold.
    pub fn at(&self, threshold: f64) -> Vec<f64> {
        self.inner.at(threshold)
    }

    /// Flattened `[score, is_bona_fide]` pairs.
    pub fn points(&self) -> Vec<f64> {
        self.inner.points()
    }
}

#[wasm_bindgen]
pub struct Clustering {
    centers: Vec<f64>,
    assignment: Vec<u32>,
    history: Vec<f64>,
}

#[wasm_bindgen]
impl Clustering {
    /// Flattened `[x, y]` centers.
    pub fn centers(&self) -> Vec<f64> {
        self.centers.clone()
    }

    pub fn assignment(&self) -> Vec<u32> {
        self.assignment.clone()
    }

    /// Inertia after every assignment step of the kept restart.
    #[wasm_bindgen(js_name = inertiaHistory)]
    pub fn inertia_history(&self) -> Vec<f64> {
        self.history.clone()
    }
}

#[wasm_bindgen(js_name = plantedPoints)]
pub fn planted_points(k: u32, per_cluster: u32, spread: f64, seed: u32) -> Vec<f64> {
    demo::planted_points(k as usize, per_cluster as usize, spread, seed as u64)
}

#[wasm_bindgen(js_name = clusterPoints)]
pub fn cluster_points(points: &[f64], k: u32, seed: u32) -> Result<Clustering, JsError> {
    let r = demo::cluster_points(points, k as usize, seed as u64).map_err(|e| JsError::new(&e))?;
    Ok(Clustering {
        centers: r.centers.data().to_vec(),
        assignment: r.assignment.iter().map(|&a| a as u32).collect(),
        history: r.inertia_history,
    })
}
