//! Layer registry and a sequential network executor.
//!
//! Layouts: `Linear` consumes `[N, in]` (one row per frame); the 1D
//! layers consume `[C, T]`; the 2D layers consume `[C, H, W]`.

use std::collections::BTreeMap;

use rand::Rng;

use super::graph::{Graph, Var};
use super::kernels::Geom1d;
use super::tensor::Tensor;
use super::weights::NetWeights;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Padding {
    /// Output length `ceil(len / stride)`; requires an odd kernel.
    Same,
    Explicit(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    None,
    Relu,
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LayerKind {
    Linear { input: usize, output: usize },
    Conv1d { cin: usize, cout: usize, kernel: usize, stride: usize, dilation: usize },
    ConvTranspose1d { cin: usize, cout: usize, kernel: usize, stride: usize },
    /// conv → relu → conv, plus identity skip.
    Res1d { channels: usize, kernel: usize, dilation: usize },
    Conv2d { cin: usize, cout: usize, kernel: usize, stride: usize },
    /// conv → relu → conv, plus identity skip.
    Res2d { channels: usize, kernel: usize },
    AvgPool2,
    Upsample2,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub padding: Padding,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(kind: LayerKind, padding: Padding, activation: Activation) -> Result<Self> {
        let spec = Self {
            kind,
            padding,
            activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn linear(input: usize, output: usize, activation: Activation) -> Result<Self> {
        Self::new(LayerKind::Linear { input, output }, Padding::Explicit(0), activation)
    }

    pub fn conv1d(cin: usize, cout: usize, kernel: usize, activation: Activation) -> Result<Self> {
        Self::new(
            LayerKind::Conv1d {
                cin,
                cout,
                kernel,
                stride: 1,
                dilation: 1,
            },
            Padding::Same,
            activation,
        )
    }

    pub fn res1d(channels: usize, kernel: usize, dilation: usize) -> Result<Self> {
        Self::new(
            LayerKind::Res1d {
                channels,
                kernel,
                dilation,
            },
            Padding::Same,
            Activation::None,
        )
    }

    pub fn conv2d(cin: usize, cout: usize, kernel: usize, stride: usize, activation: Activation) -> Result<Self> {
        Self::new(
            LayerKind::Conv2d {
                cin,
                cout,
                kernel,
                stride,
            },
            Padding::Same,
            activation,
        )
    }

    pub fn res2d(channels: usize, kernel: usize) -> Result<Self> {
        Self::new(LayerKind::Res2d { channels, kernel }, Padding::Same, Activation::None)
    }

    fn validate(&self) -> Result<()> {
        let (channels, kernel, stride) = match self.kind {
            LayerKind::Linear { input, output } => ([input, output], 1, 1),
            LayerKind::Conv1d {
                cin,
                cout,
                kernel,
                stride,
                dilation,
            } => {
                if dilation == 0 {
                    return Err(Error::InvalidArgument("dilation must be >= 1".into()));
                }
                ([cin, cout], kernel, stride)
            }
            LayerKind::ConvTranspose1d {
                cin,
                cout,
                kernel,
                stride,
            } => {
                if self.padding == Padding::Same {
                    return Err(Error::InvalidArgument(
                        "transposed convolution needs explicit padding".into(),
                    ));
                }
                ([cin, cout], kernel, stride)
            }
            LayerKind::Res1d {
                channels,
                kernel,
                dilation,
            } => {
                if dilation == 0 {
                    return Err(Error::InvalidArgument("dilation must be >= 1".into()));
                }
                if self.padding != Padding::Same {
                    return Err(Error::InvalidArgument("residual blocks use same padding".into()));
                }
                ([channels, channels], kernel, 1)
            }
            LayerKind::Conv2d {
                cin,
                cout,
                kernel,
                stride,
            } => ([cin, cout], kernel, stride),
            LayerKind::Res2d { channels, kernel } => {
                if self.padding != Padding::Same {
                    return Err(Error::InvalidArgument("residual blocks use same padding".into()));
                }
                ([channels, channels], kernel, 1)
            }
            LayerKind::AvgPool2 | LayerKind::Upsample2 => ([1, 1], 1, 1),
        };
        if channels.contains(&0) {
            return Err(Error::InvalidArgument("channel counts must be >= 1".into()));
        }
        if kernel == 0 || stride == 0 {
            return Err(Error::InvalidArgument("kernel and stride must be >= 1".into()));
        }
        if self.padding == Padding::Same && kernel % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "same padding needs an odd kernel, got {kernel}"
            )));
        }
        Ok(())
    }

    fn pad_for(&self, kernel: usize, dilation: usize) -> usize {
        match self.padding {
            Padding::Same => dilation * (kernel - 1) / 2,
            Padding::Explicit(p) => p,
        }
    }

    /// Parameter names and shapes owned by this layer.
    fn param_shapes(&self) -> Vec<(&'static str, Vec<usize>, usize)> {
        match self.kind {
            LayerKind::Linear { input, output } => vec![
                ("weight", vec![output, input], input),
                ("bias", vec![output], input),
            ],
            LayerKind::Conv1d { cin, cout, kernel, .. } => vec![
                ("weight", vec![cout, cin, kernel], cin * kernel),
                ("bias", vec![cout], cin * kernel),
            ],
            LayerKind::ConvTranspose1d { cin, cout, kernel, .. } => vec![
                ("weight", vec![cin, cout, kernel], cin * kernel),
                ("bias", vec![cout], cin * kernel),
            ],
            LayerKind::Res1d { channels, kernel, .. } => {
                let fan = channels * kernel;
                vec![
                    ("conv1.weight", vec![channels, channels, kernel], fan),
                    ("conv1.bias", vec![channels], fan),
                    ("conv2.weight", vec![channels, channels, kernel], fan),
                    ("conv2.bias", vec![channels], fan),
                ]
            }
            LayerKind::Conv2d { cin, cout, kernel, .. } => {
                let fan = cin * kernel * kernel;
                vec![
                    ("weight", vec![cout, cin, kernel, kernel], fan),
                    ("bias", vec![cout], fan),
                ]
            }
            LayerKind::Res2d { channels, kernel } => {
                let fan = channels * kernel * kernel;
                vec![
                    ("conv1.weight", vec![channels, channels, kernel, kernel], fan),
                    ("conv1.bias", vec![channels], fan),
                    ("conv2.weight", vec![channels, channels, kernel, kernel], fan),
                    ("conv2.bias", vec![channels], fan),
                ]
            }
            LayerKind::AvgPool2 | LayerKind::Upsample2 => Vec::new(),
        }
    }
}

/// An ordered list of layers whose parameters live under `prefix`.
#[derive(Clone, Debug, PartialEq)]
pub struct Net {
    prefix: String,
    layers: Vec<LayerSpec>,
}

fn shape_err(layer: &str, want: &str, got: &[usize]) -> Error {
    Error::Shape(format!("{layer}: expected {want}, got {got:?}"))
}

impl Net {
    pub fn new(prefix: impl Into<String>, layers: Vec<LayerSpec>) -> Self {
        Self {
            prefix: prefix.into(),
            layers,
        }
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    fn pname(&self, i: usize, local: &str) -> String {
        format!("{}.{}.{}", self.prefix, i, local)
    }

    /// Seeded uniform fan-in initialisation: bound `1/sqrt(fan_in)`.
    pub fn init<R: Rng + ?Sized>(&self, weights: &mut NetWeights, rng: &mut R) {
        for (i, layer) in self.layers.iter().enumerate() {
            for (local, shape, fan) in layer.param_shapes() {
                let bound = 1.0 / (fan as f64).sqrt();
                weights.insert(self.pname(i, local), Tensor::uniform(shape, bound, rng));
            }
        }
    }

    pub fn init_weights<R: Rng + ?Sized>(&self, rng: &mut R) -> NetWeights {
        let mut w = NetWeights::new();
        self.init(&mut w, rng);
        w
    }

    fn p(&self, g: &mut Graph, w: &NetWeights, i: usize, local: &str) -> Result<Var> {
        let name = self.pname(i, local);
        let t = w.get(&name)?;
        Ok(g.param(&name, t))
    }

    /// Records the network on `g`, starting from `x`.
    pub fn forward(&self, g: &mut Graph, w: &NetWeights, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = self.layer_forward(g, w, i, layer, h)?;
            h = match layer.activation {
                Activation::None => h,
                Activation::Relu => g.relu(h),
                Activation::LeakyRelu(s) => g.leaky_relu(h, s),
                Activation::Tanh => g.tanh(h),
                Activation::Sigmoid => g.sigmoid(h),
            };
        }
        Ok(h)
    }

    fn layer_forward(&self, g: &mut Graph, w: &NetWeights, i: usize, layer: &LayerSpec, h: Var) -> Result<Var> {
        let shape = g.shape(h).to_vec();
        let name = format!("{}.{}", self.prefix, i);
        Ok(match layer.kind {
            LayerKind::Linear { input, .. } => {
                if shape.len() != 2 || shape[1] != input {
                    return Err(shape_err(&name, &format!("[N, {input}]"), &shape));
                }
                let wt = self.p(g, w, i, "weight")?;
                let b = self.p(g, w, i, "bias")?;
                let wtt = g.transpose(wt);
                let y = g.matmul(h, wtt);
                g.row_bias(y, b)
            }
            LayerKind::Conv1d {
                cin,
                kernel,
                stride,
                dilation,
                ..
            } => {
                check_1d(&name, &shape, cin, kernel, layer.pad_for(kernel, dilation), dilation)?;
                let wt = self.p(g, w, i, "weight")?;
                let b = self.p(g, w, i, "bias")?;
                let y = g.conv1d(h, wt, stride, layer.pad_for(kernel, dilation), dilation);
                g.channel_bias(y, b)
            }
            LayerKind::ConvTranspose1d { cin, kernel, stride, .. } => {
                if shape.len() != 2 || shape[0] != cin || shape[1] == 0 {
                    return Err(shape_err(&name, &format!("[{cin}, T]"), &shape));
                }
                let pad = layer.pad_for(kernel, 1);
                if (shape[1] - 1) * stride + kernel <= 2 * pad {
                    return Err(shape_err(&name, "longer input", &shape));
                }
                let wt = self.p(g, w, i, "weight")?;
                let b = self.p(g, w, i, "bias")?;
                let y = g.conv_transpose1d(h, wt, stride, pad, 1, 0);
                g.channel_bias(y, b)
            }
            LayerKind::Res1d {
                channels,
                kernel,
                dilation,
            } => {
                let pad = layer.pad_for(kernel, dilation);
                check_1d(&name, &shape, channels, kernel, pad, dilation)?;
                let w1 = self.p(g, w, i, "conv1.weight")?;
                let b1 = self.p(g, w, i, "conv1.bias")?;
                let w2 = self.p(g, w, i, "conv2.weight")?;
                let b2 = self.p(g, w, i, "conv2.bias")?;
                let y = g.conv1d(h, w1, 1, pad, dilation);
                let y = g.channel_bias(y, b1);
                let y = g.relu(y);
                let y = g.conv1d(y, w2, 1, pad, dilation);
                let y = g.channel_bias(y, b2);
                g.add(y, h)
            }
            LayerKind::Conv2d {
                cin, kernel, stride, ..
            } => {
                let pad = layer.pad_for(kernel, 1);
                check_2d(&name, &shape, cin, kernel, pad)?;
                let wt = self.p(g, w, i, "weight")?;
                let b = self.p(g, w, i, "bias")?;
                let y = g.conv2d(h, wt, stride, pad);
                g.channel_bias(y, b)
            }
            LayerKind::Res2d { channels, kernel } => {
                let pad = layer.pad_for(kernel, 1);
                check_2d(&name, &shape, channels, kernel, pad)?;
                let w1 = self.p(g, w, i, "conv1.weight")?;
                let b1 = self.p(g, w, i, "conv1.bias")?;
                let w2 = self.p(g, w, i, "conv2.weight")?;
                let b2 = self.p(g, w, i, "conv2.bias")?;
                let y = g.conv2d(h, w1, 1, pad);
                let y = g.channel_bias(y, b1);
                let y = g.relu(y);
                let y = g.conv2d(y, w2, 1, pad);
                let y = g.channel_bias(y, b2);
                g.add(y, h)
            }
            LayerKind::AvgPool2 => {
                if shape.len() != 3 || shape[1] % 2 != 0 || shape[2] % 2 != 0 {
                    return Err(shape_err(&name, "[C, even H, even W]", &shape));
                }
                g.avg_pool2(h)
            }
            LayerKind::Upsample2 => {
                if shape.len() != 3 {
                    return Err(shape_err(&name, "[C, H, W]", &shape));
                }
                g.upsample2(h)
            }
        })
    }

    /// Standalone forward pass returning the output and its tape.
    pub fn run(&self, weights: &NetWeights, input: &Tensor) -> Result<(Tensor, Tape)> {
        let mut graph = Graph::new();
        let x = graph.input(input.clone());
        let y = self.forward(&mut graph, weights, x)?;
        graph.check_finite()?;
        let out = graph.value(y).clone();
        Ok((
            out,
            Tape {
                graph,
                input: x,
                output: y,
            },
        ))
    }
}

fn check_1d(name: &str, shape: &[usize], cin: usize, kernel: usize, pad: usize, dilation: usize) -> Result<()> {
    if shape.len() != 2 || shape[0] != cin {
        return Err(shape_err(name, &format!("[{cin}, T]"), shape));
    }
    if Geom1d::conv_out_len(shape[1], kernel, 1, pad, dilation).is_none() {
        return Err(shape_err(name, "a longer sequence", shape));
    }
    Ok(())
}

fn check_2d(name: &str, shape: &[usize], cin: usize, kernel: usize, pad: usize) -> Result<()> {
    if shape.len() != 3 || shape[0] != cin {
        return Err(shape_err(name, &format!("[{cin}, H, W]"), shape));
    }
    if shape[1] + 2 * pad < kernel || shape[2] + 2 * pad < kernel {
        return Err(shape_err(name, "a larger image", shape));
    }
    Ok(())
}

/// Recorded forward pass of a [`Net`], ready for a backward call.
#[derive(Clone, Debug)]
pub struct Tape {
    graph: Graph,
    input: Var,
    output: Var,
}

impl Tape {
    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    /// Parameter gradients and the input gradient for a given output gradient.
    pub fn backward(&self, out_grad: &Tensor) -> Result<(BTreeMap<String, Tensor>, Tensor)> {
        if out_grad.shape() != self.graph.shape(self.output) {
            return Err(Error::Shape(format!(
                "output gradient {:?} does not match output {:?}",
                out_grad.shape(),
                self.graph.shape(self.output)
            )));
        }
        let grads = self.graph.backward_with(self.output, out_grad.clone());
        let params = self.graph.param_grads(&grads);
        let input = grads
            .get(self.input)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(self.graph.shape(self.input).to_vec()));
        Ok((params, input))
    }
}
