//! Hard-sample selection from cross-branch disagreement.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Directive {
    Light,
    Strong,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaaSelection {
    /// `|p_phys − p_dig|` per sample.
    pub delta: Vec<f64>,
    pub weights: Vec<f64>,
    pub directives: Vec<Directive>,
}

impl CaaSelection {
    pub fn uniform(n: usize) -> Self {
        Self {
            delta: vec![0.0; n],
            weights: vec![1.0; n],
            directives: vec![Directive::Light; n],
        }
    }

    pub fn num_hard(&self) -> usize {
        self.directives.iter().filter(|d| **d == Directive::Strong).count()
    }
}

/// Marks the top-`rho` fraction of samples by disagreement as hard.
///
/// With `k = ⌈ρ·n⌉` the cut value is the `(k+1)`-th largest δ and a sample is
/// hard when its δ is strictly above the cut, so a tie straddling the cut is
/// left out entirely and equal δ everywhere selects nothing.
pub fn caa_select(p_phys: &[f64], p_dig: &[f64], rho: f64, w_hard: f64) -> CaaSelection {
    assert_eq!(p_phys.len(), p_dig.len(), "branch probability counts differ");
    let n = p_phys.len();
    let delta: Vec<f64> = p_phys.iter().zip(p_dig).map(|(a, b)| (a - b).abs()).collect();
    let k = ((rho * n as f64).ceil() as usize).min(n);
    let mut sorted = delta.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let cut = if k == 0 {
        f64::INFINITY
    } else if k == n {
        f64::NEG_INFINITY
    } else {
        sorted[k]
    };
    let hard: Vec<bool> = delta.iter().map(|&d| d > cut).collect();
    CaaSelection {
        weights: hard.iter().map(|&h| if h { w_hard } else { 1.0 }).collect(),
        directives: hard
            .iter()
            .map(|&h| if h { Directive::Strong } else { Directive::Light })
            .collect(),
        delta,
    }
}
