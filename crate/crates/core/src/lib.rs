//! Text-driven talking-head synthesis at desk scale.
//!
//! The pipeline runs from frame-aligned phonemes and words to mouth,
//! upper-face and head-pose animation parameters ([`anim`]), drives a
//! multi-linear 3D face model and rasterizes its 68 landmarks
//! ([`face3d`]), retargets mouth motion to a speaker's style
//! ([`style`]), and renders frames with an attention-fused renderer
//! ([`render`]). Everything trains on the from-scratch autodiff core in
//! [`nn`].

pub mod anim;
pub mod config;
pub mod dataset;
pub mod error;
pub mod face3d;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod render;
pub mod style;

pub use error::{Error, Result};
