//! Spoof-aware context tokens: cluster centers of the class-description
//! embeddings, projected into each tower's hidden width by a trainable linear map.

use std::fmt::Write as _;

use crate::autograd::{Graph, Var};
use crate::clip::ClassEmbeddings;
use crate::error::{Error, Result};
use crate::prompt::kmeans::{kmeans, KMeansResult};
use crate::rng::Rng;
use crate::tensor::{matmul_bt, Tensor};

#[derive(Debug, Clone)]
pub struct ContextBank {
    centers: Tensor,
    /// `[text_width, d]`
    pub w_text: Tensor,
    /// `[vision_width, d]`
    pub w_vision: Tensor,
    clustering: KMeansResult,
}

/// Context bank placed on a graph.
#[derive(Debug, Clone, Copy)]
pub struct BoundContext {
    pub centers: Var,
    pub w_text: Var,
    pub w_vision: Var,
    /// `[K, text_width]`
    pub text: Var,
    /// `[K, vision_width]`
    pub vision: Var,
}

fn project(w: &Tensor, centers: &Tensor) -> Tensor {
    let (k, d, out) = (centers.rows(), centers.cols(), w.rows());
    let mut data = vec![0.0; k * out];
    matmul_bt(centers.data(), w.data(), k, d, out, &mut data);
    Tensor::from_parts(vec![k, out], data)
}

impl ContextBank {
    /// Clusters the rows of `class_embeds` into `k` centers and initializes
    /// both projections with std `init_std`. The model passes the prompt init
    /// std: a fan-in std would make context tokens tens of times larger than
    /// the token embeddings they sit beside.
    pub fn build(
        class_embeds: &Tensor,
        k: usize,
        text_width: usize,
        vision_width: usize,
        init_std: f64,
        seed: u64,
    ) -> Result<Self> {
        let clustering = kmeans(class_embeds, k, seed)?;
        let d = class_embeds.cols();
        let mut rng = Rng::new(seed).derive(0x5c96);
        Ok(Self {
            centers: clustering.centers.clone(),
            w_text: Tensor::trunc_normal(&[text_width, d], init_std, &mut rng),
            w_vision: Tensor::trunc_normal(&[vision_width, d], init_std, &mut rng),
            clustering,
        })
    }

    /// Bank with given centers and projections (used when restoring a checkpoint).
    pub fn from_parts(centers: Tensor, w_text: Tensor, w_vision: Tensor) -> Result<Self> {
        let d = centers.cols();
        if w_text.shape().len() != 2 || w_text.cols() != d || w_vision.shape().len() != 2 || w_vision.cols() != d {
            return Err(Error::dim(
                "context_bank",
                format!(
                    "centers {:?}, w_text {:?}, w_vision {:?}",
                    centers.shape(),
                    w_text.shape(),
                    w_vision.shape()
                ),
            ));
        }
        let clustering = KMeansResult {
            centers: centers.clone(),
            assignment: Vec::new(),
            inertia: f64::NAN,
            inertia_history: Vec::new(),
            iterations: 0,
        };
        Ok(Self {
            centers,
            w_text,
            w_vision,
            clustering,
        })
    }

    pub fn k(&self) -> usize {
        self.centers.rows()
    }

    pub fn centers(&self) -> &Tensor {
        &self.centers
    }

    pub fn clustering(&self) -> &KMeansResult {
        &self.clustering
    }

    /// `q^t_i = W_t · q_i`, recomputed from the current projection.
    pub fn text_context(&self) -> Tensor {
        project(&self.w_text, &self.centers)
    }

    /// `q^v_i = W_v · q_i`, recomputed from the current projection.
    pub fn visual_context(&self) -> Tensor {
        project(&self.w_vision, &self.centers)
    }

    /// Centers go on the tape as constants: only the projections can receive gradient.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Result<BoundContext> {
        let w_text = g.leaf(self.w_text.clone(), trainable);
        let w_vision = g.leaf(self.w_vision.clone(), trainable);
        self.project_on(g, w_text, w_vision)
    }

    /// Projects the constant centers through projections already on `g`.
    pub fn project_on(&self, g: &mut Graph, w_text: Var, w_vision: Var) -> Result<BoundContext> {
        let centers = g.constant(self.centers.clone());
        let text = g.linear(centers, w_text, None)?;
        let vision = g.linear(centers, w_vision, None)?;
        Ok(BoundContext {
            centers,
            w_text,
            w_vision,
            text,
            vision,
        })
    }

    /// Cluster sizes, inertia and the description nearest each center.
    pub fn report(&self, embeddings: &ClassEmbeddings, class_names: &[String]) -> String {
        let mut out = String::new();
        let sizes = self.clustering.cluster_sizes();
        let _ = writeln!(out, "clusters: {}", self.k());
        let _ = writeln!(out, "points: {}", embeddings.matrix.rows());
        if self.clustering.inertia.is_finite() {
            let _ = writeln!(out, "inertia: {:.6}", self.clustering.inertia);
            let _ = writeln!(out, "iterations: {}", self.clustering.iterations);
        }
        let _ = writeln!(out, "center\tsize\tnearest_class\tnearest_description\tdistance");
        for c in 0..self.k() {
            let center = self.centers.row(c);
            let nearest = (0..embeddings.matrix.rows())
                .map(|i| {
                    let d: f64 = embeddings
                        .matrix
                        .row(i)
                        .iter()
                        .zip(center)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    (i, d.sqrt())
                })
                .min_by(|a, b| a.1.total_cmp(&b.1));
            let size = sizes.get(c).copied().unwrap_or(0);
            match nearest {
                Some((i, dist)) => {
                    let class = class_names
                        .get(embeddings.class_index[i])
                        .map(String::as_str)
                        .unwrap_or("?");
                    let _ = writeln!(out, "{c}\t{size}\t{class}\t{}\t{dist:.6}", embeddings.texts[i]);
                }
                None => {
                    let _ = writeln!(out, "{c}\t{size}\t-\t-\t-");
                }
            }
        }
        out
    }
}
