//! Conditional landmark volumes and pixel boxes.

use serde::{Deserialize, Serialize};

use super::nets::{VOLUME_CHANNELS, WINDOW};
use crate::error::{Error, Result};
use crate::nn::Tensor;

/// The `[45, H, W]` volume of landmark frames `t-7 ..= t+7` in order,
/// with indices clamped to the sequence.
pub fn build_volume(frames: &[Tensor], t: usize) -> Result<Tensor> {
    let first = frames
        .first()
        .ok_or_else(|| Error::InvalidArgument("no landmark frames".into()))?;
    if first.rank() != 3 || first.dim(0) != 3 {
        return Err(Error::Shape(format!("landmark frame {:?}, expected [3, H, W]", first.shape())));
    }
    if let Some(i) = frames.iter().position(|f| f.shape() != first.shape()) {
        return Err(Error::Shape(format!(
            "landmark frame {i} is {:?}, frame 0 is {:?}",
            frames[i].shape(),
            first.shape()
        )));
    }
    if t >= frames.len() {
        return Err(Error::IndexOutOfRange {
            what: "landmark frames",
            index: t,
            size: frames.len(),
        });
    }
    let (h, w) = (first.dim(1), first.dim(2));
    let mut data = Vec::with_capacity(VOLUME_CHANNELS * h * w);
    for k in 0..WINDOW {
        let idx = (t + k).saturating_sub(WINDOW / 2).min(frames.len() - 1);
        data.extend_from_slice(frames[idx].data());
    }
    Tensor::new(vec![VOLUME_CHANNELS, h, w], data)
}

/// Half-open pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelBox {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        Self { x0, y0, x1, y1 }
    }

    /// Bounding box of `points` grown by `margin` pixels and clipped to
    /// the image. Non-finite points are ignored.
    pub fn around(points: &[[f64; 2]], margin: f64, height: usize, width: usize) -> Result<Self> {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points.iter().filter(|p| p[0].is_finite() && p[1].is_finite()) {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        if !lo[0].is_finite() {
            return Err(Error::InvalidArgument("box around no finite points".into()));
        }
        let clip = |v: f64, n: usize| v.clamp(0.0, n as f64) as usize;
        let b = Self {
            x0: clip((lo[0] - margin).floor(), width),
            y0: clip((lo[1] - margin).floor(), height),
            x1: clip((hi[0] + margin).ceil() + 1.0, width),
            y1: clip((hi[1] + margin).ceil() + 1.0, height),
        };
        b.validate(height, width)?;
        Ok(b)
    }

    pub fn width(&self) -> usize {
        self.x1.saturating_sub(self.x0)
    }

    pub fn height(&self) -> usize {
        self.y1.saturating_sub(self.y0)
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0..self.x1).contains(&x) && (self.y0..self.y1).contains(&y)
    }

    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        if self.x0 >= self.x1 || self.y0 >= self.y1 || self.x1 > width || self.y1 > height {
            return Err(Error::InvalidArgument(format!(
                "box {self:?} is empty or outside a {width}x{height} image"
            )));
        }
        Ok(())
    }
}

/// `[C, H, W]` to interleaved `H×W×C` for PNG output.
pub fn chw_to_hwc(t: &Tensor) -> Vec<f64> {
    let (c, h, w) = (t.dim(0), t.dim(1), t.dim(2));
    let mut out = vec![0.0; c * h * w];
    for (ci, plane) in t.data().chunks_exact(h * w).enumerate() {
        for (i, &v) in plane.iter().enumerate() {
            out[i * c + ci] = v;
        }
    }
    out
}
