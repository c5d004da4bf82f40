//! Renderer model state, checkpoints and the adversarial training loop.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::{disc_loss, loss_video, FeaturePyramid, LossWeights};
use super::nets::{RenderArch, RenderOutput, RendererNets, VideoDiscriminators};
use super::volume::PixelBox;
use crate::dataset::substream;
use crate::error::{Error, Result};
use crate::nn::{accumulate_grads, scale_grads, AdamConfig, Graph, NetWeights, Tensor, TensorFile};

pub const PYRAMID_CHANNELS: [usize; 4] = [8, 16, 32, 32];

/// One training frame: conditional volume, target in `[0, 1]`, face box.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderSample {
    pub volume: Tensor,
    pub target: Tensor,
    pub face_box: PixelBox,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderModel {
    pub nets: RendererNets,
    pub discs: VideoDiscriminators,
    pub pyramid: FeaturePyramid,
    pub g_weights: NetWeights,
    pub d_weights: NetWeights,
    pub seed: u64,
}

impl RenderModel {
    pub fn new(arch: RenderArch, seed: u64) -> Result<Self> {
        let nets = RendererNets::new(arch)?;
        let discs = VideoDiscriminators::new(arch)?;
        let g_weights = nets.init(&mut substream(seed, 61));
        let d_weights = discs.init(&mut substream(seed, 62));
        Ok(Self {
            nets,
            discs,
            pyramid: FeaturePyramid::seeded(seed, PYRAMID_CHANNELS),
            g_weights,
            d_weights,
            seed,
        })
    }

    pub fn arch(&self) -> RenderArch {
        self.nets.arch
    }

    pub fn render(&self, volume: &Tensor) -> Result<RenderOutput> {
        self.nets.render(&self.g_weights, volume)
    }

    /// Rendered frame mapped from `[-1, 1]` to `[0, 1]`.
    pub fn render_image(&self, volume: &Tensor) -> Result<Tensor> {
        Ok(self.render(volume)?.image.map(to_unit))
    }

    pub fn generator_path(dir: &Path) -> PathBuf {
        dir.join("g_render.ckpt")
    }

    pub fn discriminator_path(dir: &Path) -> PathBuf {
        dir.join("d_render.ckpt")
    }

    fn file(&self, w: &NetWeights) -> TensorFile {
        let mut f = w.to_tensor_file();
        f.meta.insert("role".into(), serde_json::json!("render"));
        f.meta.insert("seed".into(), serde_json::json!(self.seed));
        f.meta.insert("arch".into(), serde_json::to_value(self.arch()).expect("arch serializes"));
        f
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.file(&self.g_weights).save(&Self::generator_path(dir))?;
        self.file(&self.d_weights).save(&Self::discriminator_path(dir))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let gp = Self::generator_path(dir);
        let dp = Self::discriminator_path(dir);
        for p in [&gp, &dp] {
            if !p.exists() {
                return Err(Error::MissingArtifact(p.clone()));
            }
        }
        let gf = TensorFile::load(&gp)?;
        let arch: RenderArch = gf
            .meta
            .get("arch")
            .cloned()
            .map(serde_json::from_value)
            .transpose()
            .map_err(|e| Error::Malformed(format!("renderer arch: {e}")))?
            .ok_or_else(|| Error::Malformed("renderer checkpoint has no arch".into()))?;
        let seed = gf
            .meta
            .get("seed")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Malformed("renderer checkpoint has no seed".into()))?;
        let mut m = Self::new(arch, seed)?;
        let g = NetWeights::from_tensor_file(&gf)?;
        let d = NetWeights::from_tensor_file(&TensorFile::load(&dp)?)?;
        for (fresh, loaded, what) in [(&m.g_weights, &g, "renderer"), (&m.d_weights, &d, "renderer discriminator")] {
            for (name, p) in fresh.iter() {
                if loaded.get(name)?.shape() != p.value.shape() {
                    return Err(Error::Malformed(format!("{what} tensor {name} has the wrong shape")));
                }
            }
        }
        m.g_weights = g;
        m.d_weights = d;
        Ok(m)
    }
}

pub fn to_unit(v: f64) -> f64 {
    0.5 * (v + 1.0)
}

pub fn to_signed(v: f64) -> f64 {
    2.0 * v - 1.0
}

/// Learning rate moves linearly from `lr_start` to `lr_end` over
/// `decay_epochs`, then holds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderSchedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub decay_epochs: usize,
}

impl Default for RenderSchedule {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 3,
            lr_start: 2e-4,
            lr_end: 1e-4,
            decay_epochs: 50,
        }
    }
}

impl RenderSchedule {
    pub fn lr(&self, epoch: usize) -> f64 {
        if self.decay_epochs == 0 {
            return self.lr_end;
        }
        let f = (epoch as f64 / self.decay_epochs as f64).min(1.0);
        self.lr_start + (self.lr_end - self.lr_start) * f
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderEpoch {
    pub epoch: usize,
    pub perceptual: f64,
    pub l1_image: f64,
    pub l1_face: f64,
    pub g_adv: f64,
    pub d_loss: f64,
    pub total: f64,
}

fn check_sample(m: &RenderModel, i: usize, s: &RenderSample) -> Result<()> {
    let a = m.arch();
    if s.volume.shape() != m.nets.volume_shape() || s.target.shape() != [3, a.height, a.width] {
        return Err(Error::Shape(format!(
            "render sample {i}: volume {:?}, target {:?}",
            s.volume.shape(),
            s.target.shape()
        )));
    }
    s.face_box.validate(a.height, a.width)
}

fn finite(epoch: usize, what: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Divergence {
            epoch,
            what: what.into(),
        })
    }
}

/// Per batch: renderer forward, discriminator update on (real, fake),
/// then the renderer update against the updated discriminators.
/// `on_epoch` sees every epoch's mean components and the current model.
pub fn train_renderer(
    model: &mut RenderModel,
    data: &[RenderSample],
    schedule: &RenderSchedule,
    weights: &LossWeights,
    seed: u64,
    mut on_epoch: impl FnMut(&RenderEpoch, &RenderModel) -> Result<()>,
) -> Result<Vec<RenderEpoch>> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("no renderer training frames".into()));
    }
    if schedule.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    for (i, s) in data.iter().enumerate() {
        check_sample(model, i, s)?;
    }
    let targets: Vec<Tensor> = data.iter().map(|s| s.target.map(to_signed)).collect();
    let mut rng = substream(seed, 63);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::with_capacity(schedule.epochs);
    for epoch in 0..schedule.epochs {
        let cfg = AdamConfig::renderer(schedule.lr(epoch));
        order.shuffle(&mut rng);
        let mut sums = [0.0; 6];
        for batch in order.chunks(schedule.batch_size) {
            let n = batch.len() as f64;
            let mut forward = Vec::with_capacity(batch.len());
            for &i in batch {
                let mut g = Graph::new();
                let v = g.constant(data[i].volume.clone());
                let out = model.nets.forward(&mut g, &model.g_weights, v)?;
                forward.push((g, v, out, i));
            }

            let mut d_grads = BTreeMap::new();
            for (g, _, out, i) in &forward {
                let mut dg = Graph::new();
                let real = dg.constant(targets[*i].clone());
                let fake = dg.constant(g.value(out.image).clone());
                let vol = dg.constant(data[*i].volume.clone());
                let loss = disc_loss(&mut dg, &model.discs, &model.d_weights, real, fake, vol)?;
                sums[4] += dg.value(loss).item();
                accumulate_grads(&mut d_grads, dg.param_grads(&dg.backward(loss)));
            }
            scale_grads(&mut d_grads, 1.0 / n);
            model.d_weights.adam_step(&d_grads, &cfg)?;

            let mut g_grads = BTreeMap::new();
            for (mut g, v, out, i) in forward {
                let target = g.constant(targets[i].clone());
                let l = loss_video(
                    &mut g,
                    &model.pyramid,
                    &model.discs,
                    &model.d_weights,
                    &out,
                    target,
                    v,
                    &data[i].face_box,
                    weights,
                )?;
                for (k, var) in [l.perceptual, l.l1_image, l.l1_face, l.adversarial].into_iter().enumerate() {
                    sums[k] += g.value(var).item();
                }
                sums[5] += g.value(l.total).item();
                let mut grads = g.param_grads(&g.backward(l.total));
                grads.retain(|name, _| model.g_weights.contains(name));
                accumulate_grads(&mut g_grads, grads);
            }
            scale_grads(&mut g_grads, 1.0 / n);
            model.g_weights.adam_step(&g_grads, &cfg)?;
        }
        let m = data.len() as f64;
        let e = RenderEpoch {
            epoch,
            perceptual: finite(epoch, "perceptual loss", sums[0] / m)?,
            l1_image: finite(epoch, "image L1", sums[1] / m)?,
            l1_face: finite(epoch, "face L1", sums[2] / m)?,
            g_adv: finite(epoch, "renderer adversarial loss", sums[3] / m)?,
            d_loss: finite(epoch, "renderer discriminator loss", sums[4] / m)?,
            total: finite(epoch, "renderer loss", sums[5] / m)?,
        };
        if !model.g_weights.all_finite() || !model.d_weights.all_finite() {
            return Err(Error::Divergence {
                epoch,
                what: "non-finite renderer weights".into(),
            });
        }
        on_epoch(&e, model)?;
        curve.push(e);
    }
    Ok(curve)
}

pub fn write_render_csv(path: &Path, curve: &[RenderEpoch]) -> Result<()> {
    let mut s = String::from("epoch,perceptual,l1_image,l1_face,g_adv,d_loss,total\n");
    for e in curve {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            e.epoch, e.perceptual, e.l1_image, e.l1_face, e.g_adv, e.d_loss, e.total
        ));
    }
    std::fs::write(path, s).map_err(|err| Error::io(path, err))
}
