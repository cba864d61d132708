//! Per-layer block inputs with injected context and prompt rows.
//!
//! Text layout: `[sos, context×K, prompt×M_t, class tokens, eos]`.
//! Image layout: `[cls, patch×M, context×K, prompt×M_v]`.
//! For layers `l ≤ D` the context and prompt rows are replaced; every other row
//! is carried from the previous block in order. For `l > D` the whole previous
//! output passes through.

use crate::autograd::{Graph, Var};
use crate::clip::{AssembledSequence, Role, SequenceHook};
use crate::error::{Error, Result};

/// Rows injected into one tower.
#[derive(Debug, Clone, Copy)]
pub struct Injection {
    /// `[K, width]`, shared by every injected layer.
    pub context: Option<Var>,
    /// `[D, M, width]` (or `[D·M, width]`): fresh rows for each injected layer.
    pub prompts: Option<Var>,
    pub prompt_len: usize,
    pub depth: usize,
    pub num_layers: usize,
}

impl Injection {
    pub fn none(num_layers: usize) -> Self {
        Self {
            context: None,
            prompts: None,
            prompt_len: 0,
            depth: 0,
            num_layers,
        }
    }

    fn check_layer(&self, layer: usize) -> Result<()> {
        if layer == 0 || layer > self.num_layers {
            return Err(Error::Internal(format!(
                "layer {layer} outside 1..={}",
                self.num_layers
            )));
        }
        Ok(())
    }

    /// Context and this layer's prompts, with their roles.
    fn injected(&self, g: &mut Graph, layer: usize) -> Result<(Vec<Var>, Vec<Role>)> {
        let mut parts = Vec::new();
        let mut roles = Vec::new();
        if let Some(ctx) = self.context {
            roles.extend(std::iter::repeat_n(Role::Context, g.value(ctx).rows()));
            parts.push(ctx);
        }
        if let (Some(p), true) = (self.prompts, self.prompt_len > 0) {
            let rows = g.slice_rows(p, (layer - 1) * self.prompt_len, self.prompt_len)?;
            roles.extend(std::iter::repeat_n(Role::Prompt, self.prompt_len));
            parts.push(rows);
        }
        Ok((parts, roles))
    }
}

fn carried(seq: &AssembledSequence) -> Vec<usize> {
    seq.roles
        .iter()
        .enumerate()
        .filter(|(_, r)| !matches!(r, Role::Context | Role::Prompt))
        .map(|(i, _)| i)
        .collect()
}

pub fn assemble_text_layer(
    g: &mut Graph,
    layer: usize,
    prev: AssembledSequence,
    inj: &Injection,
) -> Result<AssembledSequence> {
    inj.check_layer(layer)?;
    if layer > inj.depth {
        return Ok(prev);
    }
    let (injected, injected_roles) = inj.injected(g, layer)?;
    if injected.is_empty() && prev.count(Role::Context) + prev.count(Role::Prompt) == 0 {
        return Ok(prev);
    }
    let keep = carried(&prev);
    if keep.first().map(|&i| prev.roles[i]) != Some(Role::Sos) {
        return Err(Error::Internal("text sequence does not start with SOS".into()));
    }
    let sos = g.gather_rows(prev.tokens, &keep[..1])?;
    let mut parts = vec![sos];
    parts.extend(injected);
    let mut roles = vec![Role::Sos];
    roles.extend(injected_roles);
    if keep.len() > 1 {
        parts.push(g.gather_rows(prev.tokens, &keep[1..])?);
        roles.extend(keep[1..].iter().map(|&i| prev.roles[i]));
    }
    let tokens = g.concat_rows(&parts)?;
    Ok(AssembledSequence { tokens, roles })
}

pub fn assemble_image_layer(
    g: &mut Graph,
    layer: usize,
    prev: AssembledSequence,
    inj: &Injection,
) -> Result<AssembledSequence> {
    inj.check_layer(layer)?;
    if layer > inj.depth {
        return Ok(prev);
    }
    let (injected, injected_roles) = inj.injected(g, layer)?;
    if injected.is_empty() && prev.count(Role::Context) + prev.count(Role::Prompt) == 0 {
        return Ok(prev);
    }
    let keep = carried(&prev);
    if keep.first().map(|&i| prev.roles[i]) != Some(Role::Cls) {
        return Err(Error::Internal("image sequence does not start with CLS".into()));
    }
    let mut parts = vec![g.gather_rows(prev.tokens, &keep)?];
    parts.extend(injected);
    let mut roles: Vec<Role> = keep.iter().map(|&i| prev.roles[i]).collect();
    roles.extend(injected_roles);
    let tokens = g.concat_rows(&parts)?;
    Ok(AssembledSequence { tokens, roles })
}

/// Hook driving the text tower.
pub struct TextHook(pub Injection);

/// Hook driving the image tower.
pub struct ImageHook(pub Injection);

impl SequenceHook for TextHook {
    fn rebuild(&self, g: &mut Graph, layer: usize, seq: AssembledSequence) -> Result<AssembledSequence> {
        assemble_text_layer(g, layer, seq, &self.0)
    }
}

impl SequenceHook for ImageHook {
    fn rebuild(&self, g: &mut Graph, layer: usize, seq: AssembledSequence) -> Result<AssembledSequence> {
        assemble_image_layer(g, layer, seq, &self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn text_seq(g: &mut Graph, class_tokens: usize, w: usize) -> AssembledSequence {
        let n = class_tokens + 2;
        let t = Tensor::new(&[n, w], (0..n * w).map(|i| i as f64).collect()).unwrap();
        let mut roles = vec![Role::Sos];
        roles.extend(std::iter::repeat_n(Role::ClassToken, class_tokens));
        roles.push(Role::Eos);
        AssembledSequence {
            tokens: g.constant(t),
            roles,
        }
    }

    fn injection(g: &mut Graph, k: usize, m: usize, depth: usize, w: usize) -> Injection {
        Injection {
            context: (k > 0).then(|| g.constant(Tensor::full(&[k, w], -1.0))),
            prompts: (m > 0).then(|| {
                let data = (0..depth * m * w).map(|i| 1000.0 + i as f64).collect();
                g.constant(Tensor::new(&[depth, m, w], data).unwrap())
            }),
            prompt_len: m,
            depth,
            num_layers: 4,
        }
    }

    #[test]
    fn text_length_and_roles() {
        let mut g = Graph::new();
        let seq = text_seq(&mut g, 3, 5);
        let inj = injection(&mut g, 2, 4, 4, 5);
        let out = assemble_text_layer(&mut g, 1, seq, &inj).unwrap();
        assert_eq!(out.len(), 11);
        assert_eq!(out.positions(Role::Sos), vec![0]);
        assert_eq!(out.positions(Role::Eos), vec![10]);
        assert_eq!(out.positions(Role::Context), vec![1, 2]);
        assert_eq!(out.positions(Role::Prompt), vec![3, 4, 5, 6]);
        assert_eq!(g.value(out.tokens).rows(), 11);
    }

    #[test]
    fn injected_rows_replace_previous_block_output() {
        let mut g = Graph::new();
        let seq = text_seq(&mut g, 2, 3);
        let inj = injection(&mut g, 1, 2, 3, 3);
        let l1 = assemble_text_layer(&mut g, 1, seq, &inj).unwrap();
        // stand-in for a block: perturb every row
        let moved = g.affine(l1.tokens, 1.0, 0.5).unwrap();
        let prev = AssembledSequence { tokens: moved, roles: l1.roles.clone() };
        let l2 = assemble_text_layer(&mut g, 2, prev, &inj).unwrap();
        let v = g.value(l2.tokens).clone();
        assert_eq!(v.row(1), &[-1.0, -1.0, -1.0]);
        // layer-2 prompts are rows 2..4 of the [D·M, w] prompt table
        assert_eq!(v.row(2)[0], 1000.0 + 6.0);
        // carried rows come from the perturbed output
        assert_eq!(v.row(0), &[0.5, 1.5, 2.5]);
        assert_eq!(v.row(4), &[3.5, 4.5, 5.5]);
    }

    #[test]
    fn past_depth_passes_through() {
        let mut g = Graph::new();
        let seq = text_seq(&mut g, 2, 3);
        let inj = injection(&mut g, 1, 2, 2, 3);
        let l2 = assemble_text_layer(&mut g, 2, seq, &inj).unwrap();
        let before = l2.tokens;
        let l3 = assemble_text_layer(&mut g, 3, l2, &inj).unwrap();
        assert_eq!(l3.tokens, before);
        assert_eq!(l3.len(), 2 + 1 + 2 + 2);
    }

    #[test]
    fn layer_out_of_range() {
        let mut g = Graph::new();
        let seq = text_seq(&mut g, 1, 2);
        let inj = injection(&mut g, 1, 1, 4, 2);
        assert!(matches!(
            assemble_text_layer(&mut g, 0, seq.clone(), &inj),
            Err(Error::Internal(_))
        ));
        assert!(matches!(assemble_text_layer(&mut g, 5, seq, &inj), Err(Error::Internal(_))));
    }

    #[test]
    fn image_length_and_layout() {
        let mut g = Graph::new();
        let w = 4;
        let t = Tensor::zeros(&[17, w]);
        let mut roles = vec![Role::Cls];
        roles.extend(std::iter::repeat_n(Role::Patch, 16));
        let seq = AssembledSequence { tokens: g.constant(t), roles };
        let inj = injection(&mut g, 2, 4, 4, w);
        let out = assemble_image_layer(&mut g, 1, seq, &inj).unwrap();
        assert_eq!(out.len(), 23);
        assert_eq!(out.roles[0], Role::Cls);
        assert_eq!(out.positions(Role::Context), vec![17, 18]);
        assert_eq!(out.positions(Role::Prompt), vec![19, 20, 21, 22]);
    }

    #[test]
    fn empty_injection_is_identity() {
        let mut g = Graph::new();
        let seq = text_seq(&mut g, 2, 3);
        let before = seq.tokens;
        let out = assemble_text_layer(&mut g, 1, seq, &Injection { depth: 4, ..Injection::none(4) }).unwrap();
        assert_eq!(out.tokens, before);
    }
}
