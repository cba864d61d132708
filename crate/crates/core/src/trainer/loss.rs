use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};

/// Weighted mean negative log-likelihood `Σ wᵢ·(−log p[i, tᵢ]) / Σ wᵢ` of
/// log-probabilities `[n, C]`.
pub fn branch_ce_loss(g: &mut Graph, log_probs: Var, targets: &[usize], weights: &[f64]) -> Result<Var> {
    let lp = g.value(log_probs);
    let (n, c) = (lp.rows(), lp.cols());
    if targets.len() != n || weights.len() != n {
        return Err(Error::dim(
            "branch_ce_loss",
            format!("{n} rows, {} targets, {} weights", targets.len(), weights.len()),
        ));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= c) {
        return Err(Error::Input(format!("target {t} outside {c} classes")));
    }
    if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(Error::Input("sample weights must be positive".into()));
    }
    let total: f64 = weights.iter().sum();
    let mut coeffs = vec![0.0; n * c];
    for (i, (&t, &w)) in targets.iter().zip(weights).enumerate() {
        coeffs[i * c + t] = -w / total;
    }
    g.weighted_sum(log_probs, &coeffs)
}

/// `1 − mean_i cos(aᵢ, bᵢ)` over matching rows.
pub fn cosine_distance(g: &mut Graph, a: Var, b: Var) -> Result<Var> {
    let cos = g.cosine_rows(a, b)?;
    let mean = g.mean(cos)?;
    g.affine(mean, -1.0, 1.0)
}

/// Text and visual consistency terms against the frozen peers.
pub fn consistency_loss(
    g: &mut Graph,
    prompted_class: Var,
    clip_class: Var,
    prompted_visual: Var,
    clip_visual: Var,
) -> Result<(Var, Var)> {
    Ok((
        cosine_distance(g, prompted_class, clip_class)?,
        cosine_distance(g, prompted_visual, clip_visual)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn value(g: &Graph, v: Var) -> f64 {
        g.scalar_value(v)
    }

    #[test]
    fn uniform_prediction_costs_ln2() {
        let mut g = Graph::new();
        let lp = g.constant(Tensor::full(&[3, 2], 0.5f64.ln()));
        let l = branch_ce_loss(&mut g, lp, &[0, 1, 1], &[1.0; 3]).unwrap();
        assert!((value(&g, l) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn weighted_mean_convention() {
        let mut g = Graph::new();
        let (a, b) = (0.3f64, 1.7f64);
        let lp = g.constant(Tensor::from_rows(&[vec![-a, -9.0], vec![-9.0, -b]]).unwrap());
        let l = branch_ce_loss(&mut g, lp, &[0, 1], &[1.0, 2.0]).unwrap();
        assert!((value(&g, l) - (a + 2.0 * b) / 3.0).abs() < 1e-15);
        let perfect = g.constant(Tensor::from_rows(&[vec![0.0, -50.0]]).unwrap());
        let l = branch_ce_loss(&mut g, perfect, &[0], &[1.0]).unwrap();
        assert_eq!(value(&g, l), 0.0);
    }

    #[test]
    fn consistency_examples() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap());
        let same = g.constant(Tensor::from_rows(&[vec![3.0, 0.0], vec![0.0, 1.0]]).unwrap());
        let ortho = g.constant(Tensor::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap());
        let opposite = g.constant(Tensor::from_rows(&[vec![-1.0, 0.0], vec![0.0, -1.0]]).unwrap());
        let (t, v) = consistency_loss(&mut g, a, same, a, ortho).unwrap();
        assert!(value(&g, t).abs() < 1e-15);
        assert!((value(&g, v) - 1.0).abs() < 1e-15);
        let d = cosine_distance(&mut g, a, opposite).unwrap();
        assert!((value(&g, d) - 2.0).abs() < 1e-15);
        let zero = g.constant(Tensor::zeros(&[2, 2]));
        assert!(matches!(cosine_distance(&mut g, a, zero), Err(Error::Degenerate(_))));
    }
}
