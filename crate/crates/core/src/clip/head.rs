//! Cosine-similarity classification head.

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{cosine_similarity, softmax};
use crate::tensor::Tensor;

/// `p(y = c | v) = softmax_c(cos(v, l_c) / τ)`.
pub fn class_probabilities(v: &[f64], class_features: &Tensor, temperature: f64) -> Result<Vec<f64>> {
    if class_features.cols() != v.len() {
        return Err(Error::dim(
            "class_probabilities",
            format!("feature dim {} vs class features {:?}", v.len(), class_features.shape()),
        ));
    }
    let sims = (0..class_features.rows())
        .map(|c| cosine_similarity(v, class_features.row(c)))
        .collect::<Result<Vec<_>>>()?;
    softmax(&sims, temperature)
}

/// Tape version: log-probabilities `[n, C]` for image features `v: [n, d]`
/// (or `[d]`) against class features `[C, d]`.
pub fn class_log_probabilities(g: &mut Graph, v: Var, class_features: Var, temperature: f64) -> Result<Var> {
    let sims = g.cosine_matrix(v, class_features)?;
    g.log_softmax_rows(sims, temperature)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_second_class() {
        let feats = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let p = class_probabilities(&[1.0, 0.0], &feats, 1.0).unwrap();
        let e = std::f64::consts::E;
        assert!((p[0] - e / (e + 1.0)).abs() < 1e-15);
        assert!((p[0] - 0.7311).abs() < 1e-4 && (p[1] - 0.2689).abs() < 1e-4);
    }

    #[test]
    fn identical_classes_are_uniform() {
        let feats = Tensor::from_rows(&vec![vec![0.3, 0.4, 1.0]; 3]).unwrap();
        let p = class_probabilities(&[1.0, -2.0, 0.5], &feats, 0.07).unwrap();
        for pi in p {
            assert!((pi - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn scale_invariance() {
        let feats = Tensor::from_rows(&[vec![0.2, 0.9, -0.1], vec![-0.5, 0.1, 0.7]]).unwrap();
        let v = [0.3, -0.4, 0.8];
        let v10: Vec<f64> = v.iter().map(|x| x * 10.0).collect();
        let a = class_probabilities(&v, &feats, 0.07).unwrap();
        let b = class_probabilities(&v10, &feats, 0.07).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_feature_is_degenerate() {
        let feats = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(
            class_probabilities(&[1.0, 0.0], &feats, 1.0),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            class_probabilities(&[0.0, 0.0], &feats, 1.0),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn tape_head_matches_value_head() {
        let feats = Tensor::from_rows(&[vec![0.2, 0.9, -0.1], vec![-0.5, 0.1, 0.7]]).unwrap();
        let v = [0.3, -0.4, 0.8];
        let mut g = Graph::new();
        let vv = g.constant(Tensor::vector(&v).unwrap());
        let fv = g.constant(feats.clone());
        let lp = class_log_probabilities(&mut g, vv, fv, 0.07).unwrap();
        let p = class_probabilities(&v, &feats, 0.07).unwrap();
        for (a, b) in g.value(lp).data().iter().zip(&p) {
            assert!((a.exp() - b).abs() < 1e-14);
        }
    }
}
