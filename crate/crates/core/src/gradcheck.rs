//! Central finite-difference checks for the autodiff tape.
//!
//! The numerical side only ever runs forward passes, so it stays independent
//! of every backward rule it checks.

use crate::autograd::{Graph, Var};
use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub step: f64,
    /// Coordinates sampled per input tensor; tensors smaller than this are checked exhaustively.
    pub coords_per_group: usize,
    /// Denominator floor for the relative error. Gradients smaller than this
    /// (e.g. the exactly-zero key-bias gradient of softmax attention) are
    /// compared absolutely, since central-difference round-off is ~1e-10 there.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self {
            step: 1e-5,
            coords_per_group: 20,
            floor: 1e-5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    /// `(group, flat index, analytic, numeric)` for the worst coordinate.
    pub worst: Option<(usize, usize, f64, f64)>,
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Central difference `(f(x+h) - f(x-h)) / 2h` of a scalar function at one coordinate.
pub fn central_difference<F>(f: F, point: &mut [f64], index: usize, step: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let orig = point[index];
    point[index] = orig + step;
    let plus = f(point)?;
    point[index] = orig - step;
    let minus = f(point)?;
    point[index] = orig;
    Ok((plus - minus) / (2.0 * step))
}

fn eval<F>(inputs: &[Tensor], f: &F) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    Ok(g.scalar_value(out))
}

/// Picks which flat coordinates of a tensor of `len` values to probe.
pub fn sample_coords(len: usize, count: usize, rng: &mut Rng) -> Vec<usize> {
    if len <= count {
        return (0..len).collect();
    }
    let mut all: Vec<usize> = (0..len).collect();
    rng.shuffle(&mut all);
    all.truncate(count);
    all.sort_unstable();
    all
}

/// Compares the tape gradient of `f` with central differences on every input group.
pub fn check_gradient<F>(inputs: &[Tensor], f: F, cfg: GradCheck) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let grads = g.backward(out)?;

    let mut rng = Rng::new(cfg.seed);
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        checked: 0,
        worst: None,
    };
    let mut probe = inputs.to_vec();
    for (group, var) in vars.iter().enumerate() {
        let analytic = grads
            .get(*var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(inputs[group].shape()));
        for idx in sample_coords(inputs[group].len(), cfg.coords_per_group, &mut rng) {
            let orig = probe[group].data()[idx];
            probe[group].data_mut()[idx] = orig + cfg.step;
            let plus = eval(&probe, &f)?;
            probe[group].data_mut()[idx] = orig - cfg.step;
            let minus = eval(&probe, &f)?;
            probe[group].data_mut()[idx] = orig;
            let numeric = (plus - minus) / (2.0 * cfg.step);
            let a = analytic.data()[idx];
            let err = relative_error(a, numeric, cfg.floor);
            report.checked += 1;
            if err > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = report.max_rel_err.max(err);
                report.worst = Some((group, idx, a, numeric));
            }
        }
    }
    Ok(report)
}
