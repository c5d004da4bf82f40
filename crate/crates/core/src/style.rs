//! Per-frame retargeting of generic mouth parameters to a speaker's
//! articulation style.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::anim::{AnimBundle, Conditioning, Role};
use crate::dataset::{substream, MOUTH_DIM, UPPER_DIM};
use crate::error::{Error, Result};
use crate::face3d::EXPR_DIM;
use crate::nn::{AdamConfig, Activation, Graph, LayerSpec, Net, NetWeights, Tensor, TensorFile};

pub const STYLE_HIDDEN: usize = 64;

/// A reference utterance with its per-frame fitted expressions `[T, 51]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FittedUtterance {
    pub cond: Conditioning,
    pub expressions: Option<Tensor>,
}

/// Frame-aligned (generic, personal) mouth pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct StylePairs {
    pub generic: Tensor,
    pub personal: Tensor,
    /// Phoneme of every pair, shared by both sides.
    pub phonemes: Vec<usize>,
}

impl StylePairs {
    pub fn new(generic: Tensor, personal: Tensor, phonemes: Vec<usize>) -> Result<Self> {
        if generic.rank() != 2
            || generic.shape() != personal.shape()
            || generic.dim(1) != MOUTH_DIM
            || phonemes.len() != generic.dim(0)
        {
            return Err(Error::Shape(format!(
                "style pairs {:?} / {:?} with {} phonemes",
                generic.shape(),
                personal.shape(),
                phonemes.len()
            )));
        }
        Ok(Self {
            generic,
            personal,
            phonemes,
        })
    }

    pub fn len(&self) -> usize {
        self.generic.dim(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Generic side from `G^mou`, personal side from the mouth block of the
/// fitted expressions, concatenated over utterances.
pub fn build_pairs(reference: &[FittedUtterance], mouth: &AnimBundle) -> Result<StylePairs> {
    if reference.is_empty() {
        return Err(Error::InvalidArgument("style reference is empty".into()));
    }
    if mouth.role() != Role::Mouth {
        return Err(Error::InvalidArgument("style pairs need the mouth generator".into()));
    }
    let (mut generic, mut personal, mut phonemes) = (Vec::new(), Vec::new(), Vec::new());
    for (i, r) in reference.iter().enumerate() {
        let e = r
            .expressions
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("reference utterance {i} has no fitted expressions")))?;
        let t = r.cond.ph.len();
        if e.shape() != [t, EXPR_DIM] {
            return Err(Error::Shape(format!(
                "fitted expressions of utterance {i} are {:?}, expected [{t}, {EXPR_DIM}]",
                e.shape()
            )));
        }
        generic.extend_from_slice(mouth.generate(&r.cond)?.data());
        for row in e.rows() {
            personal.extend_from_slice(&row[UPPER_DIM..]);
        }
        phonemes.extend_from_slice(&r.cond.ph);
    }
    let m = phonemes.len();
    StylePairs::new(
        Tensor::new(vec![m, MOUTH_DIM], generic)?,
        Tensor::new(vec![m, MOUTH_DIM], personal)?,
        phonemes,
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct StyleMap {
    pub net: Net,
    pub weights: NetWeights,
}

impl StyleMap {
    pub fn net() -> Net {
        Net::new(
            "style",
            vec![
                LayerSpec::linear(MOUTH_DIM, STYLE_HIDDEN, Activation::Relu).expect("valid layer"),
                LayerSpec::linear(STYLE_HIDDEN, MOUTH_DIM, Activation::None).expect("valid layer"),
            ],
        )
    }

    pub fn init(seed: u64) -> Self {
        let net = Self::net();
        let weights = net.init_weights(&mut substream(seed, 50));
        Self { net, weights }
    }

    /// Unclamped network output.
    pub fn raw(&self, m: &Tensor) -> Result<Tensor> {
        Ok(self.net.run(&self.weights, m)?.0)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = self.weights.to_tensor_file();
        f.meta.insert("role".into(), serde_json::json!("style"));
        f.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let weights = NetWeights::from_tensor_file(&TensorFile::load(path)?)?;
        let net = Self::net();
        for (name, shape) in [
            ("style.0.weight", [STYLE_HIDDEN, MOUTH_DIM]),
            ("style.1.weight", [MOUTH_DIM, STYLE_HIDDEN]),
        ] {
            if weights.get(name)?.shape() != shape {
                return Err(Error::Malformed(format!("{name} has the wrong shape")));
            }
        }
        Ok(Self { net, weights })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyleTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for StyleTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            lr: 5e-4,
            batch_size: 16,
            seed: 0,
        }
    }
}

fn rows_of(t: &Tensor, idx: &[usize]) -> Tensor {
    let d = t.dim(1);
    let mut out = Vec::with_capacity(idx.len() * d);
    for &i in idx {
        out.extend_from_slice(t.row(i));
    }
    Tensor::from_parts(vec![idx.len(), d], out)
}

/// Mean squared error over all coordinates of a batch of frames.
pub fn style_loss(g: &mut Graph, map: &StyleMap, generic: &Tensor, personal: &Tensor) -> Result<crate::nn::Var> {
    let x = g.constant(generic.clone());
    let y = map.net.forward(g, &map.weights, x)?;
    let t = g.constant(personal.clone());
    let d = g.sub(y, t);
    let d = g.square(d);
    Ok(g.mean(d))
}

/// Adam on shuffled mini-batches of frames. Returns the map and the mean
/// training loss per epoch.
pub fn train_style(pairs: &StylePairs, cfg: &StyleTrainConfig) -> Result<(StyleMap, Vec<f64>)> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no style pairs".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let mut map = StyleMap::init(cfg.seed);
    let mut rng = substream(cfg.seed, 51);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let adam = AdamConfig::animation(cfg.lr);
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut g = Graph::new();
            let loss = style_loss(&mut g, &map, &rows_of(&pairs.generic, batch), &rows_of(&pairs.personal, batch))?;
            let v = g.value(loss).item();
            if !v.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    what: "style loss".into(),
                });
            }
            total += v * batch.len() as f64;
            let grads = g.param_grads(&g.backward(loss));
            map.weights.adam_step(&grads, &adam)?;
        }
        curve.push(total / pairs.len() as f64);
    }
    Ok((map, curve))
}

/// Frame-wise map, clamped to valid blendshape weights.
pub fn apply_style(map: &StyleMap, m_mou: &Tensor) -> Result<Tensor> {
    if m_mou.rank() != 2 || m_mou.dim(1) != MOUTH_DIM {
        return Err(Error::Shape(format!("mouth track {:?}, expected [T, {MOUTH_DIM}]", m_mou.shape())));
    }
    if !m_mou.all_finite() {
        return Err(Error::NonFinite("mouth track".into()));
    }
    Ok(map.raw(m_mou)?.map(|v| v.clamp(0.0, 1.0)))
}
