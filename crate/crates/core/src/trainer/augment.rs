//! Image perturbations. Light: random horizontal flip and ±10% brightness.
//! Strong: light plus one of cutout, Gaussian noise or a 2× down-up blur.
//! Outputs are clamped to `[0, 1]`.

use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::trainer::caa::Directive;

pub const BRIGHTNESS_JITTER: f64 = 0.1;
pub const NOISE_STD: f64 = 0.05;
pub const CUTOUT_GRAY: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LightParams {
    pub flip: bool,
    /// Relative brightness change in `[-0.1, 0.1]`.
    pub brightness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrongOp {
    Cutout,
    Noise,
    Blur,
}

fn dims(image: &Tensor) -> (usize, usize) {
    let s = image.shape();
    assert!(s.len() == 3 && s[2] == 3, "image must be [H, W, 3], got {s:?}");
    (s[0], s[1])
}

pub fn apply_light(image: &Tensor, p: &LightParams) -> Tensor {
    let (h, w) = dims(image);
    let scale = 1.0 + p.brightness;
    let src = image.data();
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            let sx = if p.flip { w - 1 - x } else { x };
            for c in 0..3 {
                out[(y * w + x) * 3 + c] = (src[(y * w + sx) * 3 + c] * scale).clamp(0.0, 1.0);
            }
        }
    }
    Tensor::from_parts(image.shape().to_vec(), out)
}

/// Sets the square `side × side` at `(top, left)` to mid gray.
pub fn cutout(image: &Tensor, top: usize, left: usize, side: usize) -> Tensor {
    let (h, w) = dims(image);
    let mut out = image.clone();
    let d = out.data_mut();
    for y in top..(top + side).min(h) {
        for x in left..(left + side).min(w) {
            for c in 0..3 {
                d[(y * w + x) * 3 + c] = CUTOUT_GRAY;
            }
        }
    }
    out
}

pub fn add_noise(image: &Tensor, std: f64, rng: &mut Rng) -> Tensor {
    let data = image
        .data()
        .iter()
        .map(|v| (v + std * rng.normal()).clamp(0.0, 1.0))
        .collect();
    Tensor::from_parts(image.shape().to_vec(), data)
}

/// 2×2 average pooling followed by nearest-neighbour upsampling.
pub fn down_up_blur(image: &Tensor) -> Tensor {
    let (h, w) = dims(image);
    let src = image.data();
    let mut out = vec![0.0; src.len()];
    for by in (0..h).step_by(2) {
        for bx in (0..w).step_by(2) {
            let ys = by..(by + 2).min(h);
            let xs = bx..(bx + 2).min(w);
            let count = (ys.len() * xs.len()) as f64;
            for c in 0..3 {
                let mut sum = 0.0;
                for y in ys.clone() {
                    for x in xs.clone() {
                        sum += src[(y * w + x) * 3 + c];
                    }
                }
                for y in ys.clone() {
                    for x in xs.clone() {
                        out[(y * w + x) * 3 + c] = sum / count;
                    }
                }
            }
        }
    }
    Tensor::from_parts(image.shape().to_vec(), out)
}

pub fn draw_light(rng: &mut Rng) -> LightParams {
    LightParams {
        flip: rng.coin(),
        brightness: rng.uniform_range(-BRIGHTNESS_JITTER, BRIGHTNESS_JITTER),
    }
}

/// Applies `directive` with all randomness drawn from `rng`.
pub fn augment(image: &Tensor, directive: Directive, rng: &mut Rng) -> Tensor {
    let light = apply_light(image, &draw_light(rng));
    if directive == Directive::Light {
        return light;
    }
    let (h, w) = dims(image);
    match [StrongOp::Cutout, StrongOp::Noise, StrongOp::Blur][rng.below(3)] {
        StrongOp::Cutout => {
            let area = rng.uniform_range(0.10, 0.25) * (h * w) as f64;
            let side = (area.sqrt().round() as usize).clamp(1, h.min(w));
            let top = rng.below(h - side + 1);
            let left = rng.below(w - side + 1);
            cutout(&light, top, left, side)
        }
        StrongOp::Noise => add_noise(&light, NOISE_STD, rng),
        StrongOp::Blur => down_up_blur(&light),
    }
}
