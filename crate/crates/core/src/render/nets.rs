//! Renderer networks: two-pathway feature extractor, face / colour /
//! mask heads, attention fusion, and multi-scale patch discriminators.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, Graph, LayerKind, LayerSpec, Net, NetWeights, Padding, Tensor, Var};

/// Frames in the conditional volume.
pub const WINDOW: usize = 15;
/// Channels of the conditional volume.
pub const VOLUME_CHANNELS: usize = 3 * WINDOW;
/// Residual blocks shared by the face and mask heads.
pub const SHARED_BLOCKS: usize = 3;
pub const N_SCALES: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderArch {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub color_blocks: usize,
    pub disc_channels: usize,
}

impl Default for RenderArch {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            channels: 16,
            color_blocks: 2,
            disc_channels: 16,
        }
    }
}

impl RenderArch {
    pub fn validate(&self) -> Result<()> {
        if self.height < 16 || self.width < 16 || self.height % 4 != 0 || self.width % 4 != 0 {
            return Err(Error::Config(format!(
                "render size {}x{} must be at least 16 and divisible by 4",
                self.width, self.height
            )));
        }
        if self.channels == 0 || self.disc_channels == 0 {
            return Err(Error::Config("render channel widths must be positive".into()));
        }
        Ok(())
    }
}

/// Graph handles of one rendered frame, all in `[-1, 1]` except the
/// `[1, H, W]` mask in `[0, 1]`.
#[derive(Clone, Copy, Debug)]
pub struct RenderVars {
    pub image: Var,
    pub face: Var,
    pub color: Var,
    pub mask: Var,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderOutput {
    pub image: Tensor,
    pub face: Tensor,
    pub color: Tensor,
    pub mask: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RendererNets {
    pub arch: RenderArch,
    feat_full: Net,
    feat_half: Net,
    shared: Net,
    face_head: Net,
    mask_head: Net,
    color_head: Net,
}

fn head(prefix: &str, c: usize, out: usize, act: Activation) -> Result<Net> {
    Ok(Net::new(
        prefix,
        vec![
            LayerSpec::new(LayerKind::Upsample2, Padding::Explicit(0), Activation::None)?,
            LayerSpec::conv2d(2 * c, c, 3, 1, Activation::Relu)?,
            LayerSpec::conv2d(c, out, 3, 1, act)?,
        ],
    ))
}

impl RendererNets {
    pub fn new(arch: RenderArch) -> Result<Self> {
        arch.validate()?;
        let c = arch.channels;
        let feat_full = Net::new(
            "feat_full",
            vec![
                LayerSpec::conv2d(VOLUME_CHANNELS, c, 3, 1, Activation::Relu)?,
                LayerSpec::conv2d(c, 2 * c, 3, 2, Activation::Relu)?,
            ],
        );
        let feat_half = Net::new(
            "feat_half",
            vec![
                LayerSpec::new(LayerKind::AvgPool2, Padding::Explicit(0), Activation::None)?,
                LayerSpec::conv2d(VOLUME_CHANNELS, 2 * c, 3, 1, Activation::Relu)?,
            ],
        );
        let shared = Net::new(
            "rend_shared",
            (0..SHARED_BLOCKS).map(|_| LayerSpec::res2d(2 * c, 3)).collect::<Result<_>>()?,
        );
        let mut color_layers: Vec<LayerSpec> = (0..arch.color_blocks)
            .map(|_| LayerSpec::res2d(2 * c, 3))
            .collect::<Result<_>>()?;
        color_layers.extend(head("x", c, 3, Activation::Tanh)?.layers().iter().copied());
        Ok(Self {
            arch,
            feat_full,
            feat_half,
            shared,
            face_head: head("rend_face", c, 3, Activation::Tanh)?,
            mask_head: head("rend_mask", c, 1, Activation::Sigmoid)?,
            color_head: Net::new("rend_color", color_layers),
        })
    }

    fn nets(&self) -> [&Net; 6] {
        [
            &self.feat_full,
            &self.feat_half,
            &self.shared,
            &self.face_head,
            &self.mask_head,
            &self.color_head,
        ]
    }

    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> NetWeights {
        let mut w = NetWeights::new();
        for n in self.nets() {
            n.init(&mut w, rng);
        }
        w
    }

    pub fn volume_shape(&self) -> [usize; 3] {
        [VOLUME_CHANNELS, self.arch.height, self.arch.width]
    }

    pub fn forward(&self, g: &mut Graph, w: &NetWeights, volume: Var) -> Result<RenderVars> {
        if g.shape(volume) != self.volume_shape() {
            return Err(Error::Shape(format!(
                "volume {:?}, renderer expects {:?}",
                g.shape(volume),
                self.volume_shape()
            )));
        }
        let full = self.feat_full.forward(g, w, volume)?;
        let half = self.feat_half.forward(g, w, volume)?;
        let feat = g.add(full, half);
        let shared = self.shared.forward(g, w, feat)?;
        let face = self.face_head.forward(g, w, shared)?;
        let mask = self.mask_head.forward(g, w, shared)?;
        let color = self.color_head.forward(g, w, feat)?;
        let image = fuse(g, face, color, mask);
        Ok(RenderVars {
            image,
            face,
            color,
            mask,
        })
    }

    pub fn render(&self, w: &NetWeights, volume: &Tensor) -> Result<RenderOutput> {
        let mut g = Graph::new();
        let v = g.constant(volume.clone());
        let r = self.forward(&mut g, w, v)?;
        g.check_finite()?;
        Ok(RenderOutput {
            image: g.value(r.image).clone(),
            face: g.value(r.face).clone(),
            color: g.value(r.color).clone(),
            mask: g.value(r.mask).clone(),
        })
    }
}

/// `M ⊙ face + (1 − M) ⊙ color` with a `[1, H, W]` mask broadcast over channels.
pub fn fuse(g: &mut Graph, face: Var, color: Var, mask: Var) -> Var {
    let m = g.concat(&[mask, mask, mask], 0);
    let neg = g.neg(m);
    let inv = g.offset(neg, 1.0);
    let a = g.mul(m, face);
    let b = g.mul(inv, color);
    g.add(a, b)
}

pub fn fuse_values(face: &Tensor, color: &Tensor, mask: &Tensor) -> Result<Tensor> {
    if face.shape() != color.shape() || face.rank() != 3 || mask.shape() != [1, face.dim(1), face.dim(2)] {
        return Err(Error::Shape(format!(
            "fusion of {:?} / {:?} with mask {:?}",
            face.shape(),
            color.shape(),
            mask.shape()
        )));
    }
    let mut g = Graph::new();
    let f = g.constant(face.clone());
    let c = g.constant(color.clone());
    let m = g.constant(mask.clone());
    let out = fuse(&mut g, f, c, m);
    Ok(g.value(out).clone())
}

/// Three discriminators with a shared architecture and separate weights,
/// applied to (image ⊕ volume) at full, half and quarter resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoDiscriminators {
    nets: Vec<Net>,
}

impl VideoDiscriminators {
    pub fn new(arch: RenderArch) -> Result<Self> {
        arch.validate()?;
        let c = arch.disc_channels;
        let cin = 3 + VOLUME_CHANNELS;
        let strided = |cin, cout| {
            LayerSpec::new(
                LayerKind::Conv2d {
                    cin,
                    cout,
                    kernel: 4,
                    stride: 2,
                },
                Padding::Explicit(1),
                Activation::LeakyRelu(0.2),
            )
        };
        let nets = (0..N_SCALES)
            .map(|i| {
                Ok(Net::new(
                    format!("dvid{}", i + 1),
                    vec![
                        strided(cin, c)?,
                        strided(c, 2 * c)?,
                        LayerSpec::conv2d(2 * c, 1, 3, 1, Activation::None)?,
                    ],
                ))
            })
            .collect::<Result<_>>()?;
        Ok(Self { nets })
    }

    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> NetWeights {
        let mut w = NetWeights::new();
        for n in &self.nets {
            n.init(&mut w, rng);
        }
        w
    }

    /// Patch score maps, one per scale.
    pub fn forward(&self, g: &mut Graph, w: &NetWeights, image: Var, volume: Var) -> Result<Vec<Var>> {
        let mut x = g.concat(&[image, volume], 0);
        let mut out = Vec::with_capacity(N_SCALES);
        for (i, net) in self.nets.iter().enumerate() {
            if i > 0 {
                x = g.avg_pool2(x);
            }
            out.push(net.forward(g, w, x)?);
        }
        Ok(out)
    }
}
