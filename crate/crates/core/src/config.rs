//! Flat TOML pipeline configuration. Every key is optional; defaults
//! follow the published training setup scaled to desk size where noted.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::anim::{AnimArch, Role, Schedule};
use crate::error::{Error, Result};
use crate::face3d::FitConfig;
use crate::render::{LossWeights, RenderArch, RenderSchedule};
use crate::style::StyleTrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    // data
    pub fps: u32,
    pub n_utterances: usize,
    pub n_reference: usize,
    pub face_model_seed: u64,
    /// The reference speaker's mouth is this multiple of the generic one.
    pub speaker_mouth_scale: f64,

    // animation networks
    pub embed_dim: usize,
    pub mouth_channels: usize,
    pub mouth_blocks: usize,
    pub encdec_channels: usize,
    pub anim_disc_channels: usize,
    pub anim_batch_size: usize,
    pub mouth_epochs_fixed: usize,
    pub mouth_epochs_decay: usize,
    pub upper_epochs_fixed: usize,
    pub upper_epochs_decay: usize,
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub lambda_mouth: f64,
    pub lambda_upper: f64,
    pub lambda_head: f64,
    pub augment_words: bool,

    // face fitting
    pub fit_keyframes: usize,
    pub fit_max_iters: usize,
    pub fit_lambda_e: f64,
    pub fit_lambda_s: f64,
    pub fit_grad_tol: f64,

    // style map
    pub style_epochs: usize,
    pub style_lr: f64,
    pub style_batch_size: usize,

    // renderer
    pub render_height: usize,
    pub render_width: usize,
    pub render_channels: usize,
    pub render_color_blocks: usize,
    pub render_disc_channels: usize,
    pub render_epochs: usize,
    pub render_batch_size: usize,
    pub render_lr_start: f64,
    pub render_lr_end: f64,
    pub render_decay_epochs: usize,
    pub render_frames: usize,
    pub render_sample_every: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,

    // generation
    /// Utterance document to synthesize; the first test utterance when unset.
    pub generate_input: Option<String>,
}

impl Default for Config {
    fn default() -> Self {
        let mouth = Schedule::mouth();
        let upper = Schedule::upper_head();
        let arch = AnimArch::default();
        let rarch = RenderArch::default();
        let rs = RenderSchedule::default();
        let lw = LossWeights::default();
        let st = StyleTrainConfig::default();
        let fit = FitConfig::default();
        Self {
            fps: 30,
            n_utterances: 16,
            n_reference: 2,
            face_model_seed: 7,
            speaker_mouth_scale: 0.7,
            embed_dim: arch.embed_dim,
            mouth_channels: arch.mouth_channels,
            mouth_blocks: arch.mouth_blocks,
            encdec_channels: arch.encdec_channels,
            anim_disc_channels: arch.disc_channels,
            anim_batch_size: mouth.batch_size,
            mouth_epochs_fixed: mouth.epochs_fixed,
            mouth_epochs_decay: mouth.epochs_decay,
            upper_epochs_fixed: upper.epochs_fixed,
            upper_epochs_decay: upper.epochs_decay,
            lr_generator: mouth.lr_g,
            lr_discriminator: mouth.lr_d,
            lambda_mouth: crate::anim::default_lambda(Role::Mouth),
            lambda_upper: crate::anim::default_lambda(Role::Upper),
            lambda_head: crate::anim::default_lambda(Role::Head),
            augment_words: true,
            fit_keyframes: 30,
            fit_max_iters: fit.max_iters,
            fit_lambda_e: 1e-4,
            fit_lambda_s: 1e-4,
            fit_grad_tol: fit.grad_tol,
            style_epochs: st.epochs,
            style_lr: st.lr,
            style_batch_size: st.batch_size,
            render_height: rarch.height,
            render_width: rarch.width,
            render_channels: rarch.channels,
            render_color_blocks: rarch.color_blocks,
            render_disc_channels: rarch.disc_channels,
            render_epochs: rs.epochs,
            render_batch_size: rs.batch_size,
            render_lr_start: rs.lr_start,
            render_lr_end: rs.lr_end,
            render_decay_epochs: rs.decay_epochs,
            render_frames: 48,
            render_sample_every: 10,
            alpha: lw.alpha,
            beta: lw.beta,
            gamma: lw.gamma,
            generate_input: None,
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("fps", self.fps as usize),
            ("n_utterances", self.n_utterances),
            ("n_reference", self.n_reference),
            ("anim_batch_size", self.anim_batch_size),
            ("fit_keyframes", self.fit_keyframes),
            ("style_batch_size", self.style_batch_size),
            ("render_batch_size", self.render_batch_size),
            ("render_frames", self.render_frames),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{k} must be positive")));
            }
        }
        if !(self.speaker_mouth_scale.is_finite() && self.speaker_mouth_scale > 0.0) {
            return Err(Error::Config("speaker_mouth_scale must be positive".into()));
        }
        self.render_arch().validate()?;
        if self.render_height < 64 || self.render_width < 64 {
            return Err(Error::Config("landmark images need a render size of at least 64".into()));
        }
        Ok(())
    }

    pub fn anim_arch(&self) -> AnimArch {
        AnimArch {
            embed_dim: self.embed_dim,
            mouth_channels: self.mouth_channels,
            mouth_blocks: self.mouth_blocks,
            encdec_channels: self.encdec_channels,
            disc_channels: self.anim_disc_channels,
        }
    }

    pub fn schedule(&self, role: Role) -> Schedule {
        let (fixed, decay) = match role {
            Role::Mouth => (self.mouth_epochs_fixed, self.mouth_epochs_decay),
            Role::Upper | Role::Head => (self.upper_epochs_fixed, self.upper_epochs_decay),
        };
        Schedule {
            epochs_fixed: fixed,
            epochs_decay: decay,
            batch_size: self.anim_batch_size,
            lr_g: self.lr_generator,
            lr_d: self.lr_discriminator,
        }
    }

    pub fn lambda(&self, role: Role) -> f64 {
        match role {
            Role::Mouth => self.lambda_mouth,
            Role::Upper => self.lambda_upper,
            Role::Head => self.lambda_head,
        }
    }

    pub fn fit_config(&self, fix_shape: bool) -> FitConfig {
        FitConfig {
            max_iters: self.fit_max_iters,
            grad_tol: self.fit_grad_tol,
            fix_shape,
            ..FitConfig::default()
        }
    }

    pub fn style_config(&self, seed: u64) -> StyleTrainConfig {
        StyleTrainConfig {
            epochs: self.style_epochs,
            lr: self.style_lr,
            batch_size: self.style_batch_size,
            seed,
        }
    }

    pub fn render_arch(&self) -> RenderArch {
        RenderArch {
            height: self.render_height,
            width: self.render_width,
            channels: self.render_channels,
            color_blocks: self.render_color_blocks,
            disc_channels: self.render_disc_channels,
        }
    }

    pub fn render_schedule(&self) -> RenderSchedule {
        RenderSchedule {
            epochs: self.render_epochs,
            batch_size: self.render_batch_size,
            lr_start: self.render_lr_start,
            lr_end: self.render_lr_end,
            decay_epochs: self.render_decay_epochs,
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            adversarial: 1.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(Config::parse("").unwrap(), Config::default());
    }

    #[test]
    fn defaults_round_trip() {
        let c = Config::default();
        assert_eq!(Config::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(Config::parse("no_such_key = 1").is_err());
        assert!(Config::parse("render_height = 30").is_err());
        assert!(Config::parse("fps = 0").is_err());
    }
}
