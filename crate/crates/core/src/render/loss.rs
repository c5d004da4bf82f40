//! Renderer objective: perceptual, pixel, face-crop and multi-scale
//! adversarial terms.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nets::{RenderVars, VideoDiscriminators};
use super::volume::PixelBox;
use crate::anim::{lsgan, GanSide};
use crate::dataset::substream;
use crate::error::{Error, Result};
use crate::nn::{Graph, NetWeights, Tensor, Var};

/// One frozen feature stage: convolution with `pad = k/2`, optional relu.
#[derive(Clone, Debug, PartialEq)]
pub struct PyramidStage {
    pub weight: Tensor,
    pub stride: usize,
    pub relu: bool,
}

/// Fixed feature extractor for the perceptual term. Its weights are
/// graph constants and never receive gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct FeaturePyramid {
    pub stages: Vec<PyramidStage>,
}

impl FeaturePyramid {
    /// Four stride-2 3×3 stages with seeded He-uniform weights.
    pub fn seeded(seed: u64, channels: [usize; 4]) -> Self {
        let mut rng = substream(seed, 60);
        let mut cin = 3;
        let stages = channels
            .iter()
            .map(|&cout| {
                let bound = (6.0 / (cin * 9) as f64).sqrt();
                let data = (0..cout * cin * 9).map(|_| rng.random_range(-bound..bound)).collect();
                let st = PyramidStage {
                    weight: Tensor::from_parts(vec![cout, cin, 3, 3], data),
                    stride: 2,
                    relu: true,
                };
                cin = cout;
                st
            })
            .collect();
        Self { stages }
    }

    /// A single identity stage; the perceptual term then equals the
    /// mean absolute pixel difference.
    pub fn identity() -> Self {
        let mut w = Tensor::zeros([3, 3, 1, 1]);
        for c in 0..3 {
            w.data_mut()[c * 3 + c] = 1.0;
        }
        Self {
            stages: vec![PyramidStage {
                weight: w,
                stride: 1,
                relu: false,
            }],
        }
    }

    pub fn features(&self, g: &mut Graph, x: Var) -> Vec<Var> {
        let mut out = Vec::with_capacity(self.stages.len());
        let mut h = x;
        for s in &self.stages {
            let w = g.constant(s.weight.clone());
            h = g.conv2d(h, w, s.stride, s.weight.dim(2) / 2);
            if s.relu {
                h = g.relu(h);
            }
            out.push(h);
        }
        out
    }
}

/// Mean absolute difference.
pub fn l1_mean(g: &mut Graph, a: Var, b: Var) -> Var {
    let d = g.sub(a, b);
    let d = g.abs(d);
    g.mean(d)
}

/// `Σ_i mean |F_i(a) − F_i(b)|`, each stage normalized by its size.
pub fn perceptual(g: &mut Graph, pyramid: &FeaturePyramid, a: Var, b: Var) -> Var {
    let fa = pyramid.features(g, a);
    let fb = pyramid.features(g, b);
    let terms: Vec<Var> = fa.into_iter().zip(fb).map(|(x, y)| l1_mean(g, x, y)).collect();
    let mut total = terms[0];
    for &t in &terms[1..] {
        total = g.add(total, t);
    }
    total
}

pub fn perceptual_value(pyramid: &FeaturePyramid, a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() || a.rank() != 3 || a.dim(0) != 3 {
        return Err(Error::Shape(format!("perceptual inputs {:?} / {:?}", a.shape(), b.shape())));
    }
    let mut g = Graph::new();
    let x = g.constant(a.clone());
    let y = g.constant(b.clone());
    let out = perceptual(&mut g, pyramid, x, y);
    Ok(g.value(out).item())
}

/// Weights of the renderer objective: `α·perc + β·L1_img + γ·L1_face + adv`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub adversarial: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 10.0,
            beta: 100.0,
            gamma: 100.0,
            adversarial: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct VideoLossVars {
    pub total: Var,
    pub perceptual: Var,
    pub l1_image: Var,
    pub l1_face: Var,
    pub adversarial: Var,
}

fn crop(g: &mut Graph, x: Var, b: &PixelBox) -> Var {
    let r = g.slice(x, 1, b.y0, b.height());
    g.slice(r, 2, b.x0, b.width())
}

fn sum_vars(g: &mut Graph, xs: &[Var]) -> Var {
    let mut t = xs[0];
    for &x in &xs[1..] {
        t = g.add(t, x);
    }
    t
}

/// Generator-side objective for one frame. `target` is the real frame in
/// `[-1, 1]`; the face term compares the face head output and the target
/// inside `face_box`.
#[allow(clippy::too_many_arguments)]
pub fn loss_video(
    g: &mut Graph,
    pyramid: &FeaturePyramid,
    discs: &VideoDiscriminators,
    d_weights: &NetWeights,
    out: &RenderVars,
    target: Var,
    volume: Var,
    face_box: &PixelBox,
    weights: &LossWeights,
) -> Result<VideoLossVars> {
    let shape = g.shape(target).to_vec();
    if g.shape(out.image) != shape.as_slice() {
        return Err(Error::Shape(format!("rendered {:?}, target {:?}", g.shape(out.image), shape)));
    }
    face_box.validate(shape[1], shape[2])?;
    let perc = perceptual(g, pyramid, out.image, target);
    let l1_image = l1_mean(g, out.image, target);
    let fc = crop(g, out.face, face_box);
    let tc = crop(g, target, face_box);
    let l1_face = l1_mean(g, fc, tc);
    let scores = discs.forward(g, d_weights, out.image, volume)?;
    let advs = scores
        .into_iter()
        .map(|s| lsgan(g, None, s, GanSide::Generator))
        .collect::<Result<Vec<_>>>()?;
    let adversarial = sum_vars(g, &advs);
    let a = g.scale(perc, weights.alpha);
    let b = g.scale(l1_image, weights.beta);
    let c = g.scale(l1_face, weights.gamma);
    let d = g.scale(adversarial, weights.adversarial);
    let total = sum_vars(g, &[a, b, c, d]);
    Ok(VideoLossVars {
        total,
        perceptual: perc,
        l1_image,
        l1_face,
        adversarial,
    })
}

/// Discriminator-side objective summed over scales.
pub fn disc_loss(
    g: &mut Graph,
    discs: &VideoDiscriminators,
    d_weights: &NetWeights,
    real: Var,
    fake: Var,
    volume: Var,
) -> Result<Var> {
    let r = discs.forward(g, d_weights, real, volume)?;
    let f = discs.forward(g, d_weights, fake, volume)?;
    let terms = r
        .into_iter()
        .zip(f)
        .map(|(r, f)| lsgan(g, Some(r), f, GanSide::Discriminator))
        .collect::<Result<Vec<_>>>()?;
    Ok(sum_vars(g, &terms))
}
