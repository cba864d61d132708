//! Forward passes of the two towers.

use crate::autograd::{Graph, Var};
use crate::clip::backbone::{TextTower, VisionTower};
use crate::clip::config::EncoderConfig;
use crate::clip::sequence::{AssembledSequence, Role, SequenceHook};
use crate::clip::tokenizer::{EOS, SOS};
use crate::error::{Error, Result};
use crate::nn::{layer_norm, transformer_block};
use crate::tensor::Tensor;

/// Per-channel normalization applied to `[0, 1]` pixels before patching.
pub const PIXEL_MEAN: [f64; 3] = [0.5, 0.5, 0.5];
pub const PIXEL_STD: [f64; 3] = [0.25, 0.25, 0.25];

/// Cuts a `[H, W, 3]` image into row-major `patch × patch` tiles, each
/// flattened in `(y, x, channel)` order and normalized: `[N_v, patch²·3]`.
pub fn image_patches(image: &Tensor, cfg: &EncoderConfig) -> Result<Tensor> {
    let s = cfg.image_size;
    if image.shape() != [s, s, 3] {
        return Err(Error::Input(format!(
            "image shape {:?} does not match configured [{s}, {s}, 3]",
            image.shape()
        )));
    }
    let p = cfg.patch_size;
    let side = s / p;
    let data = image.data();
    let mut out = Vec::with_capacity(s * s * 3);
    for py in 0..side {
        for px in 0..side {
            for y in py * p..(py + 1) * p {
                for x in px * p..(px + 1) * p {
                    for c in 0..3 {
                        out.push((data[(y * s + x) * 3 + c] - PIXEL_MEAN[c]) / PIXEL_STD[c]);
                    }
                }
            }
        }
    }
    Tensor::new(&[side * side, p * p * 3], out)
}

/// Layer-1 input of the image tower: `[cls, patches]` plus positional embeddings.
pub fn embed_image(
    g: &mut Graph,
    tower: &VisionTower<Var>,
    cfg: &EncoderConfig,
    image: &Tensor,
) -> Result<AssembledSequence> {
    let patches = g.constant(image_patches(image, cfg)?);
    let patch_tokens = g.linear(patches, tower.patch_embed, None)?;
    let cls = g.reshape(tower.class_embed, &[1, cfg.vision_width])?;
    let seq = g.concat_rows(&[cls, patch_tokens])?;
    let tokens = g.add(seq, tower.pos_embed)?;
    let mut roles = vec![Role::Cls];
    roles.extend(std::iter::repeat_n(Role::Patch, cfg.num_patches()));
    Ok(AssembledSequence { tokens, roles })
}

/// Image feature `v ∈ R^d`: class-token output of the last block, normalized and projected.
pub fn encode_image(
    g: &mut Graph,
    tower: &VisionTower<Var>,
    cfg: &EncoderConfig,
    image: &Tensor,
    hook: Option<&dyn SequenceHook>,
) -> Result<Var> {
    let seq = embed_image(g, tower, cfg, image)?;
    let out = run_blocks(g, &tower.blocks, cfg.heads, false, seq, hook)?;
    let idx = readoff(&out, Role::Cls)?;
    let cls = g.slice_rows(out.tokens, idx, 1)?;
    let cls = layer_norm(g, cls, &tower.ln_post)?;
    let v = g.linear(cls, tower.proj, None)?;
    g.reshape(v, &[cfg.embed_dim])
}

pub fn check_tokens(tokens: &[u32], cfg: &EncoderConfig) -> Result<()> {
    if tokens.len() < 2 || tokens[0] != SOS || *tokens.last().unwrap() != EOS {
        return Err(Error::Input("token sequence must be [SOS, .., EOS]".into()));
    }
    if tokens.len() > cfg.max_text_len {
        return Err(Error::Input(format!(
            "token sequence of length {} exceeds max_text_len {}",
            tokens.len(),
            cfg.max_text_len
        )));
    }
    if let Some(bad) = tokens.iter().find(|&&t| t as usize >= cfg.vocab_size) {
        return Err(Error::Input(format!("token id {bad} outside vocabulary of {}", cfg.vocab_size)));
    }
    if tokens[1..tokens.len() - 1].iter().any(|&t| t == SOS || t == EOS) {
        return Err(Error::Input("SOS/EOS inside the token sequence".into()));
    }
    Ok(())
}

/// Layer-1 input of the text tower: `[sos, words.., eos]` plus positional embeddings.
pub fn embed_text(
    g: &mut Graph,
    tower: &TextTower<Var>,
    cfg: &EncoderConfig,
    tokens: &[u32],
) -> Result<AssembledSequence> {
    check_tokens(tokens, cfg)?;
    let ids: Vec<usize> = tokens.iter().map(|&t| t as usize).collect();
    let emb = g.gather_rows(tower.token_embed, &ids)?;
    let pos = g.slice_rows(tower.pos_embed, 0, ids.len())?;
    let tokens_var = g.add(emb, pos)?;
    let mut roles = vec![Role::Sos];
    roles.extend(std::iter::repeat_n(Role::ClassToken, ids.len() - 2));
    roles.push(Role::Eos);
    Ok(AssembledSequence {
        tokens: tokens_var,
        roles,
    })
}

/// Text feature `l ∈ R^d`, read off at the EOS position under a causal mask.
pub fn encode_text(
    g: &mut Graph,
    tower: &TextTower<Var>,
    cfg: &EncoderConfig,
    tokens: &[u32],
    hook: Option<&dyn SequenceHook>,
) -> Result<Var> {
    let seq = embed_text(g, tower, cfg, tokens)?;
    let out = run_blocks(g, &tower.blocks, cfg.heads, true, seq, hook)?;
    let idx = readoff(&out, Role::Eos)?;
    let eos = g.slice_rows(out.tokens, idx, 1)?;
    let eos = layer_norm(g, eos, &tower.ln_final)?;
    let l = g.linear(eos, tower.proj, None)?;
    g.reshape(l, &[cfg.embed_dim])
}

fn run_blocks(
    g: &mut Graph,
    blocks: &[crate::nn::BlockParams<Var>],
    heads: usize,
    causal: bool,
    mut seq: AssembledSequence,
    hook: Option<&dyn SequenceHook>,
) -> Result<AssembledSequence> {
    for (i, block) in blocks.iter().enumerate() {
        if let Some(h) = hook {
            seq = h.rebuild(g, i + 1, seq)?;
        }
        if g.value(seq.tokens).rows() != seq.roles.len() {
            return Err(Error::Internal(format!(
                "sequence has {} rows but {} roles",
                g.value(seq.tokens).rows(),
                seq.roles.len()
            )));
        }
        seq.tokens = transformer_block(g, seq.tokens, block, heads, causal)?;
    }
    Ok(seq)
}

fn readoff(seq: &AssembledSequence, role: Role) -> Result<usize> {
    match seq.positions(role).as_slice() {
        [i] => Ok(*i),
        other => Err(Error::Internal(format!(
            "expected exactly one {role:?} position, found {}",
            other.len()
        ))),
    }
}
