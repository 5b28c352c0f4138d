//! Layer-sequence CNNs with persistent parameters.

use rand::Rng as _;

pub use crate::autodiff::Parameter;
use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::NdArray;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        padding: usize,
        stride: usize,
    },
    Relu,
    MaxPool2,
    Flatten,
    Dense {
        in_features: usize,
        out_features: usize,
    },
}

/// Output layout of the classification head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    /// One logit; the positive class is 1.
    Binary,
    /// One logit per class.
    Multiclass(usize),
}

impl HeadKind {
    /// Binary for two classes, multiclass otherwise.
    pub fn for_classes(k: usize) -> Self {
        if k <= 2 {
            HeadKind::Binary
        } else {
            HeadKind::Multiclass(k)
        }
    }

    pub fn outputs(self) -> usize {
        match self {
            HeadKind::Binary => 1,
            HeadKind::Multiclass(k) => k,
        }
    }

    pub fn classes(self) -> usize {
        match self {
            HeadKind::Binary => 2,
            HeadKind::Multiclass(k) => k,
        }
    }

    /// Predicted class per row of a logits array.
    pub fn predict(self, logits: &NdArray) -> Vec<usize> {
        match self {
            HeadKind::Binary => logits
                .data()
                .iter()
                .map(|&s| usize::from(s > 0.0))
                .collect(),
            HeadKind::Multiclass(k) => logits
                .data()
                .chunks(k)
                .map(|row| {
                    let mut best = 0;
                    for (i, &v) in row.iter().enumerate() {
                        if v > row[best] {
                            best = i;
                        }
                    }
                    best
                })
                .collect(),
        }
    }
}

/// Nodes recorded by one [`Network::forward`].
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub input: NodeId,
    pub layer_outputs: Vec<NodeId>,
    /// Output of the capture layer, `[B, K, H, W]`.
    pub activation: NodeId,
    /// `[B, 1]` for binary heads, `[B, K]` otherwise.
    pub logits: NodeId,
    /// Flattened features feeding the final dense layer, `[B, d]`.
    pub latent: NodeId,
}

/// A feed-forward network described as a layer sequence.
#[derive(Debug, Clone)]
pub struct Network {
    input_shape: [usize; 3],
    layers: Vec<LayerSpec>,
    /// `(weight, bias)` for conv and dense layers, `None` elsewhere.
    params: Vec<Option<(Parameter, Parameter)>>,
    capture_layer: usize,
    shapes: Vec<Vec<usize>>,
}

impl Network {
    /// Build a network with Kaiming-uniform (fan-in) weights and zero biases.
    ///
    /// `shapes` are validated layer by layer; the last layer must be dense and
    /// preceded by a flatten, and `capture_layer` must output `[K, H, W]`.
    pub fn new(
        input_shape: [usize; 3],
        layers: Vec<LayerSpec>,
        capture_layer: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let shapes = infer_shapes(input_shape, &layers)?;
        if capture_layer >= layers.len() || shapes[capture_layer + 1].len() != 3 {
            return Err(Error::config(format!(
                "capture layer {capture_layer} must output a [K, H, W] map"
            )));
        }
        match (
            layers.last(),
            layers.len().checked_sub(2).map(|i| layers[i]),
        ) {
            (Some(LayerSpec::Dense { .. }), Some(LayerSpec::Flatten)) => {}
            _ => {
                return Err(Error::config(
                    "network must end with flatten followed by dense",
                ))
            }
        }
        let params = layers
            .iter()
            .enumerate()
            .map(|(i, l)| match *l {
                LayerSpec::Conv2d {
                    in_ch,
                    out_ch,
                    kernel,
                    ..
                } => Some(init_pair(
                    i,
                    &[out_ch, in_ch, kernel, kernel],
                    in_ch * kernel * kernel,
                    rng,
                )),
                LayerSpec::Dense {
                    in_features,
                    out_features,
                } => Some(init_pair(i, &[out_features, in_features], in_features, rng)),
                _ => None,
            })
            .collect();
        Ok(Network {
            input_shape,
            layers,
            params,
            capture_layer,
            shapes,
        })
    }

    /// conv(C→8,k3,p1) → relu → pool → conv(8→16,k3,p1) → relu → pool →
    /// flatten → dense, capturing the second relu (before pooling).
    pub fn default_cnn(input_shape: [usize; 3], head: HeadKind, rng: &mut Rng) -> Result<Self> {
        let layers = default_layers(input_shape, head);
        Network::new(input_shape, layers, 4, rng)
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn capture_layer(&self) -> usize {
        self.capture_layer
    }

    /// Per-sample output shape of layer `i`.
    pub fn layer_output_shape(&self, i: usize) -> &[usize] {
        &self.shapes[i + 1]
    }

    pub fn head(&self) -> HeadKind {
        match self.shapes.last().map(|s| s[0]) {
            Some(1) => HeadKind::Binary,
            Some(k) => HeadKind::Multiclass(k),
            None => unreachable!("validated at construction"),
        }
    }

    /// Width of the latent vector feeding the head.
    pub fn latent_dim(&self) -> usize {
        self.shapes[self.layers.len() - 1][0]
    }

    /// Parameters in layer order, weight before bias.
    pub fn params(&self) -> Vec<Parameter> {
        self.params
            .iter()
            .flatten()
            .flat_map(|(w, b)| [w.clone(), b.clone()])
            .collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.params().iter().map(Parameter::len).sum()
    }

    /// Record the forward pass of a `[B, C, H, W]` batch.
    pub fn forward(&self, g: &mut Graph, batch: &NdArray) -> Result<ForwardTrace> {
        let s = batch.shape();
        if s.len() != 4 || s[1..] != self.input_shape {
            return Err(Error::config(format!(
                "batch shape {s:?} does not match network input {:?}",
                self.input_shape
            )));
        }
        let b = s[0];
        let input = g.constant(batch.clone());
        let mut x = input;
        let mut outs = Vec::with_capacity(self.layers.len());
        let mut latent = None;
        for (i, layer) in self.layers.iter().enumerate() {
            x = match *layer {
                LayerSpec::Conv2d {
                    padding, stride, ..
                } => {
                    let (w, bias) = self.bind(g, i);
                    g.conv2d(x, w, bias, padding, stride)?
                }
                LayerSpec::Relu => g.relu(x),
                LayerSpec::MaxPool2 => g.maxpool2(x)?,
                LayerSpec::Flatten => {
                    let n = g.value(x).row_len();
                    g.reshape(x, &[b, n])?
                }
                LayerSpec::Dense { .. } => {
                    latent = Some(x);
                    let (w, bias) = self.bind(g, i);
                    g.dense(x, w, bias)?
                }
            };
            outs.push(x);
        }
        Ok(ForwardTrace {
            input,
            activation: outs[self.capture_layer],
            logits: x,
            latent: latent.expect("validated: last layer is dense"),
            layer_outputs: outs,
        })
    }

    fn bind(&self, g: &mut Graph, layer: usize) -> (NodeId, NodeId) {
        let (w, b) = self.params[layer].as_ref().expect("layer has parameters");
        (g.param(w), g.param(b))
    }

    /// `p ← p − lr·(∇p + weight_decay·p)` for every parameter, then zero the
    /// gradient accumulators.
    pub fn sgd_step(&self, lr: Scalar, weight_decay: Scalar) {
        for p in self.params() {
            p.sgd_update(lr, weight_decay);
        }
    }

    pub fn zero_grad(&self) {
        for p in self.params() {
            p.zero_grad();
        }
    }

    /// Copy of every parameter value, in [`Network::params`] order.
    pub fn snapshot(&self) -> Vec<NdArray> {
        self.params().iter().map(|p| p.value().clone()).collect()
    }

    pub fn load_snapshot(&self, values: &[NdArray]) -> Result<()> {
        let params = self.params();
        if params.len() != values.len() {
            return Err(Error::config(format!(
                "snapshot has {} arrays, network has {} parameters",
                values.len(),
                params.len()
            )));
        }
        for (p, v) in params.iter().zip(values) {
            if p.shape() != v.shape() {
                return Err(Error::config(format!(
                    "snapshot shape {:?} does not match parameter {} {:?}",
                    v.shape(),
                    p.name(),
                    p.shape()
                )));
            }
        }
        for (p, v) in params.iter().zip(values) {
            p.set_value(v.clone());
        }
        Ok(())
    }

    /// Independent copy with fresh parameter identities.
    pub fn deep_clone(&self) -> Network {
        let params = self
            .params
            .iter()
            .map(|pair| {
                pair.as_ref().map(|(w, b)| {
                    (
                        Parameter::new(w.name(), w.value().clone()),
                        Parameter::new(b.name(), b.value().clone()),
                    )
                })
            })
            .collect();
        Network {
            params,
            ..self.clone()
        }
    }
}

/// Layer list of [`Network::default_cnn`] for a given input and head.
pub fn default_layers(input_shape: [usize; 3], head: HeadKind) -> Vec<LayerSpec> {
    let [c, h, w] = input_shape;
    let flat = 16 * (h / 2 / 2) * (w / 2 / 2);
    vec![
        LayerSpec::Conv2d {
            in_ch: c,
            out_ch: 8,
            kernel: 3,
            padding: 1,
            stride: 1,
        },
        LayerSpec::Relu,
        LayerSpec::MaxPool2,
        LayerSpec::Conv2d {
            in_ch: 8,
            out_ch: 16,
            kernel: 3,
            padding: 1,
            stride: 1,
        },
        LayerSpec::Relu,
        LayerSpec::MaxPool2,
        LayerSpec::Flatten,
        LayerSpec::Dense {
            in_features: flat,
            out_features: head.outputs(),
        },
    ]
}

fn init_pair(
    layer: usize,
    wshape: &[usize],
    fan_in: usize,
    rng: &mut Rng,
) -> (Parameter, Parameter) {
    let bound = (6.0 / fan_in as Scalar).sqrt();
    let n: usize = wshape.iter().product();
    let w: Vec<Scalar> = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    let weight = NdArray::new(wshape.to_vec(), w).expect("shape matches");
    (
        Parameter::new(format!("layer{layer}.weight"), weight),
        Parameter::new(format!("layer{layer}.bias"), NdArray::zeros(&[wshape[0]])),
    )
}

/// Per-sample shapes: `shapes[0]` is the input, `shapes[i + 1]` the output of layer `i`.
fn infer_shapes(input: [usize; 3], layers: &[LayerSpec]) -> Result<Vec<Vec<usize>>> {
    if input.contains(&0) {
        return Err(Error::config(format!(
            "input shape {input:?} has a zero extent"
        )));
    }
    let mut shapes = vec![input.to_vec()];
    for (i, layer) in layers.iter().enumerate() {
        let cur = shapes.last().unwrap().clone();
        let bad = |msg: String| Error::config(format!("layer {i} ({layer:?}): {msg}"));
        let next = match *layer {
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                kernel,
                padding,
                stride,
            } => {
                if cur.len() != 3 || cur[0] != in_ch {
                    return Err(bad(format!("expects {in_ch} channels, got {cur:?}")));
                }
                if stride == 0 || kernel == 0 || out_ch == 0 {
                    return Err(bad("zero stride, kernel or channel count".into()));
                }
                if cur[1] + 2 * padding < kernel || cur[2] + 2 * padding < kernel {
                    return Err(bad(format!("kernel larger than padded input {cur:?}")));
                }
                vec![
                    out_ch,
                    (cur[1] + 2 * padding - kernel) / stride + 1,
                    (cur[2] + 2 * padding - kernel) / stride + 1,
                ]
            }
            LayerSpec::Relu => cur,
            LayerSpec::MaxPool2 => {
                if cur.len() != 3 || cur[1] < 2 || cur[2] < 2 {
                    return Err(bad(format!("cannot pool {cur:?}")));
                }
                vec![cur[0], cur[1] / 2, cur[2] / 2]
            }
            LayerSpec::Flatten => vec![cur.iter().product()],
            LayerSpec::Dense {
                in_features,
                out_features,
            } => {
                if cur.len() != 1 || cur[0] != in_features {
                    return Err(bad(format!("expects {in_features} features, got {cur:?}")));
                }
                if out_features == 0 {
                    return Err(bad("zero output features".into()));
                }
                vec![out_features]
            }
        };
        shapes.push(next);
    }
    Ok(shapes)
}
