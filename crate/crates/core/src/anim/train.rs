//! Adversarial training of one animation generator.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::losses::{l1_seq, lsgan, ssim_seq, GanSide, SSIM_DELTA1, SSIM_DELTA2};
use super::nets::{AnimArch, Conditioning, Discriminator, Generator, Role};
use crate::dataset::{augment_unknown_words, substream, Utterance};
use crate::error::{Error, Result};
use crate::nn::{accumulate_grads, scale_grads, AdamConfig, Graph, NetWeights, Tensor, TensorFile, Var};

/// Learning-rate schedule: constant for `epochs_fixed`, then linear to
/// zero over `epochs_decay`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub epochs_fixed: usize,
    pub epochs_decay: usize,
    pub batch_size: usize,
    pub lr_g: f64,
    pub lr_d: f64,
}

impl Schedule {
    pub fn mouth() -> Self {
        Self {
            epochs_fixed: 400,
            epochs_decay: 400,
            batch_size: 32,
            lr_g: 5e-4,
            lr_d: 1e-5,
        }
    }

    pub fn upper_head() -> Self {
        Self {
            epochs_fixed: 50,
            epochs_decay: 50,
            ..Self::mouth()
        }
    }

    pub fn for_role(role: Role) -> Self {
        match role {
            Role::Mouth => Self::mouth(),
            Role::Upper | Role::Head => Self::upper_head(),
        }
    }

    pub fn epochs(&self) -> usize {
        self.epochs_fixed + self.epochs_decay
    }

    /// Multiplier on the initial rates at zero-based `epoch`.
    pub fn lr_factor(&self, epoch: usize) -> f64 {
        if epoch < self.epochs_fixed {
            1.0
        } else {
            let into = (epoch - self.epochs_fixed) as f64;
            ((self.epochs_decay as f64 - into) / self.epochs_decay as f64).max(0.0)
        }
    }
}

/// Reconstruction weight λ of the generator objective.
pub fn default_lambda(role: Role) -> f64 {
    match role {
        Role::Mouth => 50.0,
        Role::Upper | Role::Head => 100.0,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnimBundle {
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub g_weights: NetWeights,
    pub d_weights: NetWeights,
}

impl AnimBundle {
    pub fn new(role: Role, arch: AnimArch, seed: u64) -> Result<Self> {
        let generator = Generator::new(role, arch)?;
        let discriminator = Discriminator::new(role, arch)?;
        let mut rng = substream(seed, 30 + role as u64);
        let g_weights = generator.init(&mut rng);
        let d_weights = discriminator.init(&mut rng);
        Ok(Self {
            generator,
            discriminator,
            g_weights,
            d_weights,
        })
    }

    pub fn role(&self) -> Role {
        self.generator.role()
    }

    pub fn generate(&self, cond: &Conditioning) -> Result<Tensor> {
        self.generator.generate(&self.g_weights, cond)
    }

    fn file(&self, w: &NetWeights) -> TensorFile {
        let mut f = w.to_tensor_file();
        f.meta.insert("role".into(), serde_json::json!(self.role().name()));
        f.meta.insert(
            "arch".into(),
            serde_json::to_value(self.generator.arch()).expect("arch serializes"),
        );
        f
    }

    pub fn generator_path(dir: &Path, role: Role) -> std::path::PathBuf {
        dir.join(format!("g_{}.ckpt", role.name()))
    }

    pub fn discriminator_path(dir: &Path, role: Role) -> std::path::PathBuf {
        dir.join(format!("d_{}.ckpt", role.name()))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.file(&self.g_weights).save(&Self::generator_path(dir, self.role()))?;
        self.file(&self.d_weights).save(&Self::discriminator_path(dir, self.role()))
    }

    pub fn load(dir: &Path, role: Role) -> Result<Self> {
        let gp = Self::generator_path(dir, role);
        if !gp.exists() {
            return Err(Error::MissingArtifact(gp));
        }
        let gf = TensorFile::load(&gp)?;
        let arch: AnimArch = gf
            .meta
            .get("arch")
            .cloned()
            .map(serde_json::from_value)
            .transpose()
            .map_err(|e| Error::Malformed(format!("checkpoint arch: {e}")))?
            .ok_or_else(|| Error::Malformed(format!("{} has no arch", gp.display())))?;
        let dp = Self::discriminator_path(dir, role);
        if !dp.exists() {
            return Err(Error::MissingArtifact(dp));
        }
        let df = TensorFile::load(&dp)?;
        Ok(Self {
            generator: Generator::new(role, arch)?,
            discriminator: Discriminator::new(role, arch)?,
            g_weights: NetWeights::from_tensor_file(&gf)?,
            d_weights: NetWeights::from_tensor_file(&df)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub schedule: Schedule,
    pub lambda: f64,
    pub seed: u64,
    /// Mask 1–3 word runs as unknown per utterance per step (upper/head).
    pub augment_words: bool,
    pub update_generator: bool,
    pub update_discriminator: bool,
}

impl TrainOptions {
    pub fn for_role(role: Role, seed: u64) -> Self {
        Self {
            schedule: Schedule::for_role(role),
            lambda: default_lambda(role),
            seed,
            augment_words: role != Role::Mouth,
            update_generator: true,
            update_discriminator: true,
        }
    }
}

/// Per-epoch means over utterances.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLosses {
    pub epoch: usize,
    pub g_adv: f64,
    pub g_rec: f64,
    pub d_loss: f64,
}

pub fn write_loss_csv(path: &Path, losses: &[EpochLosses]) -> Result<()> {
    let mut s = String::from("epoch,g_adv,g_rec,d_loss\n");
    for l in losses {
        s.push_str(&format!("{},{},{},{}\n", l.epoch, l.g_adv, l.g_rec, l.d_loss));
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// L1-Seq for mouth, SSIM-Seq for upper face and head.
pub fn reconstruction_loss(role: Role, g: &mut Graph, target: Var, fake: Var) -> Result<Var> {
    match role {
        Role::Mouth => l1_seq(g, target, fake),
        Role::Upper | Role::Head => ssim_seq(g, target, fake, SSIM_DELTA1, SSIM_DELTA2),
    }
}

fn finite_or_diverged(epoch: usize, what: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Divergence {
            epoch,
            what: what.to_string(),
        })
    }
}

/// Alternating updates per batch: the discriminator on (real, current
/// fake), then the generator against the updated discriminator with
/// `adv + λ·rec`. Batch gradients are averaged in utterance order.
pub fn train_generator(bundle: &mut AnimBundle, corpus: &[Utterance], opts: &TrainOptions) -> Result<Vec<EpochLosses>> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("training corpus is empty".into()));
    }
    if opts.schedule.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let role = bundle.role();
    let mut rng = substream(opts.seed, 40 + role as u64);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut curves = Vec::with_capacity(opts.schedule.epochs());
    for epoch in 0..opts.schedule.epochs() {
        let factor = opts.schedule.lr_factor(epoch);
        let cfg_g = AdamConfig::animation(opts.schedule.lr_g * factor);
        let cfg_d = AdamConfig::animation(opts.schedule.lr_d * factor);
        order.shuffle(&mut rng);
        let (mut sum_adv, mut sum_rec, mut sum_d) = (0.0, 0.0, 0.0);
        for batch in order.chunks(opts.schedule.batch_size) {
            let n = batch.len() as f64;
            let mut forward = Vec::with_capacity(batch.len());
            for &i in batch {
                let u = &corpus[i];
                let mut cond = Conditioning::from_utterance(u);
                if opts.augment_words {
                    cond.w = augment_unknown_words(&cond.w, &mut rng);
                }
                let mut g = Graph::new();
                let fake = bundle.generator.forward(&mut g, &bundle.g_weights, &cond)?;
                forward.push((g, fake, role.target(u)));
            }

            let mut d_grads = BTreeMap::new();
            for (g, fake, target) in &forward {
                let mut dg = Graph::new();
                let real = dg.constant((*target).clone());
                let fake_c = dg.constant(g.value(*fake).clone());
                let dr = bundle.discriminator.forward(&mut dg, &bundle.d_weights, real)?;
                let df = bundle.discriminator.forward(&mut dg, &bundle.d_weights, fake_c)?;
                let loss = lsgan(&mut dg, Some(dr), df, GanSide::Discriminator)?;
                sum_d += dg.value(loss).item();
                if opts.update_discriminator {
                    accumulate_grads(&mut d_grads, dg.param_grads(&dg.backward(loss)));
                }
            }
            if opts.update_discriminator {
                scale_grads(&mut d_grads, 1.0 / n);
                bundle.d_weights.adam_step(&d_grads, &cfg_d)?;
            }

            let mut g_grads = BTreeMap::new();
            for (mut g, fake, target) in forward {
                let df = bundle.discriminator.forward(&mut g, &bundle.d_weights, fake)?;
                let adv = lsgan(&mut g, None, df, GanSide::Generator)?;
                let tgt = g.constant(target.clone());
                let rec = reconstruction_loss(role, &mut g, tgt, fake)?;
                let wrec = g.scale(rec, opts.lambda);
                let total = g.add(adv, wrec);
                sum_adv += g.value(adv).item();
                sum_rec += g.value(rec).item();
                if opts.update_generator {
                    let mut grads = g.param_grads(&g.backward(total));
                    grads.retain(|name, _| bundle.g_weights.contains(name));
                    accumulate_grads(&mut g_grads, grads);
                }
            }
            if opts.update_generator {
                scale_grads(&mut g_grads, 1.0 / n);
                bundle.g_weights.adam_step(&g_grads, &cfg_g)?;
            }
        }
        let m = corpus.len() as f64;
        let losses = EpochLosses {
            epoch,
            g_adv: finite_or_diverged(epoch, "generator adversarial loss", sum_adv / m)?,
            g_rec: finite_or_diverged(epoch, "reconstruction loss", sum_rec / m)?,
            d_loss: finite_or_diverged(epoch, "discriminator loss", sum_d / m)?,
        };
        if !bundle.g_weights.all_finite() || !bundle.d_weights.all_finite() {
            return Err(Error::Divergence {
                epoch,
                what: "non-finite weights".into(),
            });
        }
        curves.push(losses);
    }
    Ok(curves)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_holds_then_decays_to_zero() {
        let s = Schedule::mouth();
        assert_eq!(s.lr_factor(0), 1.0);
        assert_eq!(s.lr_factor(399), 1.0);
        assert_eq!(s.lr_factor(400), 1.0);
        assert!((s.lr_factor(600) - 0.5).abs() < 1e-12);
        assert!(s.lr_factor(799) > 0.0);
        assert_eq!(s.lr_factor(800), 0.0);
        assert_eq!(Schedule::upper_head().epochs(), 100);
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let mut b = AnimBundle::new(
            Role::Mouth,
            AnimArch {
                embed_dim: 4,
                mouth_channels: 4,
                mouth_blocks: 1,
                encdec_channels: 4,
                disc_channels: 2,
            },
            0,
        )
        .unwrap();
        assert!(train_generator(&mut b, &[], &TrainOptions::for_role(Role::Mouth, 0)).is_err());
    }
}
