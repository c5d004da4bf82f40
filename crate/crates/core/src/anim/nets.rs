//! Animation generators and patch discriminators.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Utterance, HEAD_DIM, MOUTH_DIM, N_EMOTIONS, N_PHONEMES, N_WORDS, UPPER_DIM};
use crate::error::{Error, Result};
use crate::nn::{Activation, Graph, LayerKind, LayerSpec, Net, NetWeights, Padding, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Mouth,
    Upper,
    Head,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Mouth, Role::Upper, Role::Head];

    pub fn name(self) -> &'static str {
        match self {
            Role::Mouth => "mouth",
            Role::Upper => "upper",
            Role::Head => "head",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown animation role {s:?}")))
    }

    pub fn output_dim(self) -> usize {
        match self {
            Role::Mouth => MOUTH_DIM,
            Role::Upper => UPPER_DIM,
            Role::Head => HEAD_DIM,
        }
    }

    /// Ground-truth track of this role.
    pub fn target(self, u: &Utterance) -> &Tensor {
        match self {
            Role::Mouth => &u.mouth,
            Role::Upper => &u.upper,
            Role::Head => &u.head,
        }
    }

    fn tag(self) -> &'static str {
        match self {
            Role::Mouth => "mou",
            Role::Upper => "upp",
            Role::Head => "hed",
        }
    }
}

/// Network widths. Defaults are the full-size configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnimArch {
    pub embed_dim: usize,
    pub mouth_channels: usize,
    pub mouth_blocks: usize,
    pub encdec_channels: usize,
    pub disc_channels: usize,
}

impl Default for AnimArch {
    fn default() -> Self {
        Self {
            embed_dim: 128,
            mouth_channels: 256,
            mouth_blocks: 6,
            encdec_channels: 256,
            disc_channels: 64,
        }
    }
}

/// Conditioning inputs of one utterance.
#[derive(Clone, Debug, PartialEq)]
pub struct Conditioning {
    pub ph: Vec<usize>,
    pub w: Vec<usize>,
    pub emotion: usize,
}

impl Conditioning {
    pub fn from_utterance(u: &Utterance) -> Self {
        Self {
            ph: u.ph.clone(),
            w: u.w.clone(),
            emotion: u.emotion,
        }
    }
}

fn check_indices(what: &'static str, idx: &[usize], size: usize) -> Result<()> {
    if idx.is_empty() {
        return Err(Error::InvalidArgument(format!("empty {what} sequence")));
    }
    match idx.iter().find(|&&i| i >= size) {
        Some(&index) => Err(Error::IndexOutOfRange { what, index, size }),
        None => Ok(()),
    }
}

/// Total temporal stride of the encoder.
pub const ENCODER_STRIDE: usize = 8;

const PH_TABLE: &str = "emb.ph";
const TXT_TABLE: &str = "emb.txt";
const EMO_TABLE: &str = "emb.emo";

#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    role: Role,
    arch: AnimArch,
    net: Net,
}

fn strided(cin: usize, cout: usize, act: Activation) -> Result<LayerSpec> {
    LayerSpec::new(
        LayerKind::Conv1d {
            cin,
            cout,
            kernel: 4,
            stride: 2,
            dilation: 1,
        },
        Padding::Explicit(1),
        act,
    )
}

impl Generator {
    /// `G^mou`: embedding → conv → Res1D stack → conv → sigmoid.
    /// `G^upp`/`G^hed`: embedding (plus broadcast emotion embedding for
    /// upper) → conv → 3 stride-2 convs → 2 dilated Res1D → 3 stride-2
    /// transposed convs → conv.
    pub fn new(role: Role, arch: AnimArch) -> Result<Self> {
        let e = arch.embed_dim;
        let out = role.output_dim();
        let layers = match role {
            Role::Mouth => {
                let c = arch.mouth_channels;
                let mut l = vec![LayerSpec::conv1d(e, c, 5, Activation::Relu)?];
                for _ in 0..arch.mouth_blocks {
                    l.push(LayerSpec::res1d(c, 5, 1)?);
                }
                l.push(LayerSpec::conv1d(c, out, 5, Activation::Sigmoid)?);
                l
            }
            Role::Upper | Role::Head => {
                let c = arch.encdec_channels;
                let cin = if role == Role::Upper { 2 * e } else { e };
                let up = LayerSpec::new(
                    LayerKind::ConvTranspose1d {
                        cin: c,
                        cout: c,
                        kernel: 4,
                        stride: 2,
                    },
                    Padding::Explicit(1),
                    Activation::Relu,
                )?;
                let top = if role == Role::Upper {
                    Activation::Sigmoid
                } else {
                    Activation::None
                };
                vec![
                    LayerSpec::conv1d(cin, c, 5, Activation::Relu)?,
                    strided(c, c, Activation::Relu)?,
                    strided(c, c, Activation::Relu)?,
                    strided(c, c, Activation::Relu)?,
                    LayerSpec::res1d(c, 5, 2)?,
                    LayerSpec::res1d(c, 5, 4)?,
                    up,
                    up,
                    up,
                    LayerSpec::conv1d(c, out, 5, top)?,
                ]
            }
        };
        Ok(Self {
            role,
            arch,
            net: Net::new(format!("g{}", role.tag()), layers),
        })
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn arch(&self) -> &AnimArch {
        &self.arch
    }

    pub fn net(&self) -> &Net {
        &self.net
    }

    /// Network weights plus the embedding tables the role uses.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> NetWeights {
        let e = self.arch.embed_dim;
        let mut w = NetWeights::new();
        match self.role {
            Role::Mouth => w.insert(PH_TABLE, Tensor::uniform([N_PHONEMES, e], 1.0, rng)),
            Role::Upper => {
                w.insert(TXT_TABLE, Tensor::uniform([N_WORDS, e], 1.0, rng));
                w.insert(EMO_TABLE, Tensor::uniform([N_EMOTIONS, e], 1.0, rng));
            }
            Role::Head => w.insert(TXT_TABLE, Tensor::uniform([N_WORDS, e], 1.0, rng)),
        }
        self.net.init(&mut w, rng);
        w
    }

    /// Records the generator; the result is `[T, D]`.
    pub fn forward(&self, g: &mut Graph, w: &NetWeights, cond: &Conditioning) -> Result<Var> {
        let x = match self.role {
            Role::Mouth => {
                check_indices("phoneme", &cond.ph, N_PHONEMES)?;
                let table = g.param(PH_TABLE, w.get(PH_TABLE)?);
                let e = g.gather(table, &cond.ph);
                g.transpose(e)
            }
            Role::Upper | Role::Head => {
                check_indices("word", &cond.w, N_WORDS)?;
                let table = g.param(TXT_TABLE, w.get(TXT_TABLE)?);
                let e = g.gather(table, &cond.w);
                let e = g.transpose(e);
                if self.role == Role::Upper {
                    check_indices("emotion", &[cond.emotion], N_EMOTIONS)?;
                    let emo = g.param(EMO_TABLE, w.get(EMO_TABLE)?);
                    let v = g.gather(emo, &[cond.emotion]);
                    let v = g.reshape(v, &[self.arch.embed_dim]);
                    let v = g.broadcast_cols(v, cond.w.len());
                    g.concat(&[e, v], 0)
                } else {
                    e
                }
            }
        };
        let t = g.shape(x)[1];
        let y = if self.role == Role::Mouth {
            self.net.forward(g, w, x)?
        } else {
            let padded = t.div_ceil(ENCODER_STRIDE) * ENCODER_STRIDE;
            let x = g.pad(x, 1, 0, padded - t);
            let y = self.net.forward(g, w, x)?;
            g.slice(y, 1, 0, t)
        };
        Ok(g.transpose(y))
    }

    /// Forward pass without gradients.
    pub fn generate(&self, w: &NetWeights, cond: &Conditioning) -> Result<Tensor> {
        let mut g = Graph::new();
        let y = self.forward(&mut g, w, cond)?;
        g.check_finite()?;
        Ok(g.value(y).clone())
    }
}

/// Patch discriminator over temporal trunks: two stride-2 stages with
/// Res1D blocks and a one-channel head, no pooling.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    input_dim: usize,
    net: Net,
}

impl Discriminator {
    pub fn new(role: Role, arch: AnimArch) -> Result<Self> {
        let c = arch.disc_channels;
        let d = role.output_dim();
        let layers = vec![
            strided(d, c, Activation::LeakyRelu(0.2))?,
            LayerSpec::res1d(c, 5, 1)?,
            strided(c, 2 * c, Activation::LeakyRelu(0.2))?,
            LayerSpec::res1d(2 * c, 5, 1)?,
            LayerSpec::conv1d(2 * c, 1, 3, Activation::None)?,
        ];
        Ok(Self {
            input_dim: d,
            net: Net::new(format!("d{}", role.tag()), layers),
        })
    }

    pub fn net(&self) -> &Net {
        &self.net
    }

    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> NetWeights {
        self.net.init_weights(rng)
    }

    pub const MIN_FRAMES: usize = 4;

    /// Number of patch scores for a `T`-frame sequence.
    pub fn output_len(t: usize) -> Option<usize> {
        let stage = |n: usize| (n >= 2).then(|| (n + 2 - 4) / 2 + 1);
        stage(t).and_then(stage)
    }

    /// Patch scores `[1, T']` for a `[T, D]` sequence.
    pub fn forward(&self, g: &mut Graph, w: &NetWeights, seq: Var) -> Result<Var> {
        let shape = g.shape(seq).to_vec();
        if shape.len() != 2 || shape[1] != self.input_dim {
            return Err(Error::Shape(format!(
                "discriminator expects [T, {}], got {shape:?}",
                self.input_dim
            )));
        }
        if shape[0] < Self::MIN_FRAMES {
            return Err(Error::InvalidArgument(format!(
                "sequence of {} frames is shorter than the discriminator trunk ({})",
                shape[0],
                Self::MIN_FRAMES
            )));
        }
        let x = g.transpose(seq);
        self.net.forward(g, w, x)
    }

    pub fn score(&self, w: &NetWeights, seq: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let x = g.constant(seq.clone());
        let y = self.forward(&mut g, w, x)?;
        Ok(g.value(y).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::substream;

    fn small() -> AnimArch {
        AnimArch {
            embed_dim: 8,
            mouth_channels: 8,
            mouth_blocks: 2,
            encdec_channels: 8,
            disc_channels: 4,
        }
    }

    #[test]
    fn output_shapes_follow_input_length() {
        let mut rng = substream(0, 0);
        for role in Role::ALL {
            let gen = Generator::new(role, small()).unwrap();
            let w = gen.init(&mut rng);
            for t in [1, 7, 96] {
                let cond = Conditioning {
                    ph: vec![0; t],
                    w: vec![0; t],
                    emotion: 2,
                };
                let y = gen.generate(&w, &cond).unwrap();
                assert_eq!(y.shape(), [t, role.output_dim()]);
                assert!(y.all_finite());
            }
        }
    }

    #[test]
    fn discriminator_length_formula() {
        let mut rng = substream(0, 1);
        let d = Discriminator::new(Role::Mouth, small()).unwrap();
        let w = d.init(&mut rng);
        for t in 4..20 {
            let s = d.score(&w, &Tensor::full([t, MOUTH_DIM], 0.3)).unwrap();
            assert_eq!(s.shape(), [1, Discriminator::output_len(t).unwrap()]);
        }
        assert!(d.score(&w, &Tensor::full([3, MOUTH_DIM], 0.3)).is_err());
    }

    #[test]
    fn rejects_out_of_range_indices() {
        let gen = Generator::new(Role::Mouth, small()).unwrap();
        let w = gen.init(&mut substream(0, 2));
        let cond = Conditioning {
            ph: vec![0, N_PHONEMES],
            w: vec![0, 0],
            emotion: 0,
        };
        assert!(matches!(gen.generate(&w, &cond), Err(Error::IndexOutOfRange { .. })));
    }
}
