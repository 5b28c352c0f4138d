//! Graph ops: forward evaluation on construction, vector-Jacobian products on
//! the reverse sweep.

use std::rc::Rc;

use super::kernels::{self, ConvGeom};
use super::{accumulate, Graph, Node, NodeId};
use crate::error::{Error, Result};
use crate::tensor::NdArray;
use crate::Scalar;

/// Backward rule of a custom unary op: `(input, output, grad_output) -> grad_input`.
pub type BackwardFn = Rc<dyn Fn(&NdArray, &NdArray, &NdArray) -> NdArray>;

pub(super) enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    AddScalar(NodeId),
    MulScalar(NodeId, Scalar),
    MulConst(NodeId, NdArray),
    Abs(NodeId),
    Sqrt(NodeId),
    Ln(NodeId),
    Square(NodeId),
    Relu(NodeId),
    SignedPow(NodeId, Scalar),
    Reshape(NodeId),
    SumRows(NodeId),
    BroadcastRows(NodeId),
    SumAll(NodeId),
    Gather(NodeId, Vec<usize>),
    Conv2d {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        geom: ConvGeom,
    },
    MaxPool2 {
        input: NodeId,
        argmax: Vec<usize>,
    },
    Dense {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
    },
    SigmoidBce {
        logits: NodeId,
        targets: Vec<Scalar>,
    },
    SoftmaxCe {
        logits: NodeId,
        targets: Vec<usize>,
        probs: Vec<Scalar>,
    },
    ChannelWeightedSum {
        act: NodeId,
        alpha: NdArray,
    },
    Custom(NodeId, BackwardFn),
}

impl Op {
    pub(super) fn parents(&self) -> Vec<NodeId> {
        use Op::*;
        match self {
            Leaf => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) => vec![*a, *b],
            AddScalar(a)
            | MulScalar(a, _)
            | MulConst(a, _)
            | Abs(a)
            | Sqrt(a)
            | Ln(a)
            | Square(a)
            | Relu(a)
            | SignedPow(a, _)
            | Reshape(a)
            | SumRows(a)
            | BroadcastRows(a)
            | SumAll(a)
            | Gather(a, _)
            | Custom(a, _) => vec![*a],
            Conv2d {
                input,
                weight,
                bias,
                ..
            }
            | Dense {
                input,
                weight,
                bias,
            } => vec![*input, *weight, *bias],
            MaxPool2 { input, .. } => vec![*input],
            SigmoidBce { logits, .. } | SoftmaxCe { logits, .. } => vec![*logits],
            ChannelWeightedSum { act, .. } => vec![*act],
        }
    }

    pub(super) fn backward(
        &self,
        nodes: &[Node],
        out: &NdArray,
        g: &NdArray,
        need: &[bool],
        grads: &mut [Option<NdArray>],
    ) {
        use Op::*;
        let val = |id: NodeId| &nodes[id.0].value;
        let wants = |id: NodeId| need[id.0];
        match self {
            Leaf => {}
            Add(a, b) => {
                if wants(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if wants(*b) {
                    accumulate(grads, *b, g.clone());
                }
            }
            Sub(a, b) => {
                if wants(*a) {
                    accumulate(grads, *a, g.clone());
                }
                if wants(*b) {
                    accumulate(grads, *b, g.map(|v| -v));
                }
            }
            Mul(a, b) => {
                if wants(*a) {
                    accumulate(grads, *a, g.zip_map(val(*b), |g, y| g * y));
                }
                if wants(*b) {
                    accumulate(grads, *b, g.zip_map(val(*a), |g, x| g * x));
                }
            }
            Div(a, b) => {
                let y = val(*b);
                if wants(*a) {
                    accumulate(grads, *a, g.zip_map(y, |g, y| g / y));
                }
                if wants(*b) {
                    // ∂(x/y)/∂y = −(x/y)/y
                    let gb = out.zip_map(g, |o, g| o * g).zip_map(y, |og, y| -og / y);
                    accumulate(grads, *b, gb);
                }
            }
            AddScalar(a) | Reshape(a) => {
                if wants(*a) {
                    let gi = NdArray::new(val(*a).shape().to_vec(), g.data().to_vec())
                        .expect("same element count");
                    accumulate(grads, *a, gi);
                }
            }
            MulScalar(a, c) => {
                if wants(*a) {
                    accumulate(grads, *a, g.map(|v| v * c));
                }
            }
            MulConst(a, c) => {
                if wants(*a) {
                    accumulate(grads, *a, g.zip_map(c, |g, c| g * c));
                }
            }
            Abs(a) => {
                if wants(*a) {
                    accumulate(grads, *a, g.zip_map(val(*a), |g, x| g * sign(x)));
                }
            }
            Sqrt(a) => {
                if wants(*a) {
                    // d√x = 1/(2√x); taken as 0 at x = 0 where it is unbounded.
                    let gi = g.zip_map(out, |g, y| if y > 0.0 { g * 0.5 / y } else { 0.0 });
                    accumulate(grads, *a, gi);
                }
            }
            Ln(a) => {
                if wants(*a) {
                    accumulate(grads, *a, g.zip_map(val(*a), |g, x| g / x));
                }
            }
            Square(a) => {
                if wants(*a) {
                    accumulate(grads, *a, g.zip_map(val(*a), |g, x| 2.0 * g * x));
                }
            }
            Relu(a) => {
                if wants(*a) {
                    accumulate(
                        grads,
                        *a,
                        g.zip_map(val(*a), |g, x| if x > 0.0 { g } else { 0.0 }),
                    );
                }
            }
            SignedPow(a, p) => {
                if wants(*a) {
                    let p = *p;
                    let gi = g.zip_map(val(*a), |g, x| {
                        if x == 0.0 {
                            0.0
                        } else {
                            g * p * x.abs().powf(p - 1.0)
                        }
                    });
                    accumulate(grads, *a, gi);
                }
            }
            SumRows(a) => {
                if wants(*a) {
                    let x = val(*a);
                    let w = x.row_len();
                    let data = g
                        .data()
                        .iter()
                        .flat_map(|&v| std::iter::repeat_n(v, w))
                        .collect();
                    accumulate(grads, *a, NdArray::new(x.shape().to_vec(), data).unwrap());
                }
            }
            BroadcastRows(a) => {
                if wants(*a) {
                    let w = out.row_len();
                    let data: Vec<Scalar> = g.data().chunks(w).map(|r| r.iter().sum()).collect();
                    accumulate(
                        grads,
                        *a,
                        NdArray::new(val(*a).shape().to_vec(), data).unwrap(),
                    );
                }
            }
            SumAll(a) => {
                if wants(*a) {
                    accumulate(grads, *a, NdArray::full(val(*a).shape(), g.data()[0]));
                }
            }
            Gather(a, index) => {
                if wants(*a) {
                    let x = val(*a);
                    let k = x.row_len();
                    let mut gi = NdArray::zeros(x.shape());
                    for (row, (&t, &gv)) in index.iter().zip(g.data()).enumerate() {
                        gi.data_mut()[row * k + t] += gv;
                    }
                    accumulate(grads, *a, gi);
                }
            }
            Conv2d {
                input,
                weight,
                bias,
                geom,
            } => {
                let x = val(*input);
                let w = val(*weight);
                let batch = x.shape()[0];
                let mut gi = wants(*input).then(|| NdArray::zeros(x.shape()));
                let mut gw = wants(*weight).then(|| NdArray::zeros(w.shape()));
                let mut gb = wants(*bias).then(|| NdArray::zeros(val(*bias).shape()));
                kernels::conv2d_backward(
                    geom,
                    batch,
                    x.data(),
                    w.data(),
                    g.data(),
                    gi.as_mut().map(|a| a.data_mut()),
                    gw.as_mut().map(|a| a.data_mut()),
                    gb.as_mut().map(|a| a.data_mut()),
                );
                for (id, grad) in [(*input, gi), (*weight, gw), (*bias, gb)] {
                    if let Some(grad) = grad {
                        accumulate(grads, id, grad);
                    }
                }
            }
            MaxPool2 { input, argmax } => {
                if wants(*input) {
                    let mut gi = NdArray::zeros(val(*input).shape());
                    let d = gi.data_mut();
                    for (&src, &gv) in argmax.iter().zip(g.data()) {
                        d[src] += gv;
                    }
                    accumulate(grads, *input, gi);
                }
            }
            Dense {
                input,
                weight,
                bias,
            } => {
                let x = val(*input);
                let w = val(*weight);
                let (batch, in_f) = (x.shape()[0], x.shape()[1]);
                let out_f = w.shape()[0];
                if wants(*input) {
                    let mut gi = NdArray::zeros(x.shape());
                    kernels::gemm(
                        batch,
                        out_f,
                        in_f,
                        g.data(),
                        false,
                        w.data(),
                        false,
                        0.0,
                        gi.data_mut(),
                    );
                    accumulate(grads, *input, gi);
                }
                if wants(*weight) {
                    let mut gw = NdArray::zeros(w.shape());
                    kernels::gemm(
                        out_f,
                        batch,
                        in_f,
                        g.data(),
                        true,
                        x.data(),
                        false,
                        0.0,
                        gw.data_mut(),
                    );
                    accumulate(grads, *weight, gw);
                }
                if wants(*bias) {
                    let mut gb = NdArray::zeros(&[out_f]);
                    for row in g.data().chunks(out_f) {
                        for (b, v) in gb.data_mut().iter_mut().zip(row) {
                            *b += v;
                        }
                    }
                    accumulate(grads, *bias, gb);
                }
            }
            SigmoidBce { logits, targets } => {
                if wants(*logits) {
                    let s = val(*logits);
                    let data = s
                        .data()
                        .iter()
                        .zip(targets)
                        .zip(g.data())
                        .map(|((&s, &y), &gv)| gv * (sigmoid(s) - y))
                        .collect();
                    accumulate(
                        grads,
                        *logits,
                        NdArray::new(s.shape().to_vec(), data).unwrap(),
                    );
                }
            }
            SoftmaxCe {
                logits,
                targets,
                probs,
            } => {
                if wants(*logits) {
                    let s = val(*logits);
                    let k = s.row_len();
                    let mut gi = NdArray::new(s.shape().to_vec(), probs.clone()).unwrap();
                    for (row, (&t, &gv)) in targets.iter().zip(g.data()).enumerate() {
                        let r = &mut gi.data_mut()[row * k..(row + 1) * k];
                        r[t] -= 1.0;
                        r.iter_mut().for_each(|v| *v *= gv);
                    }
                    accumulate(grads, *logits, gi);
                }
            }
            ChannelWeightedSum { act, alpha } => {
                if wants(*act) {
                    let a = val(*act);
                    let (b, k) = (a.shape()[0], a.shape()[1]);
                    let plane = a.row_len() / k;
                    let mut gi = NdArray::zeros(a.shape());
                    let d = gi.data_mut();
                    for s in 0..b {
                        let gs = &g.data()[s * plane..(s + 1) * plane];
                        for c in 0..k {
                            let w = alpha.data()[s * k + c];
                            let dst = &mut d[(s * k + c) * plane..(s * k + c + 1) * plane];
                            for (o, &gv) in dst.iter_mut().zip(gs) {
                                *o = w * gv;
                            }
                        }
                    }
                    accumulate(grads, *act, gi);
                }
            }
            Custom(a, f) => {
                if wants(*a) {
                    accumulate(grads, *a, f(val(*a), out, g));
                }
            }
        }
    }
}

fn sign(x: Scalar) -> Scalar {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn sigmoid(s: Scalar) -> Scalar {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

fn same_shape(g: &Graph, a: NodeId, b: NodeId, what: &str) {
    assert_eq!(
        g.value(a).shape(),
        g.value(b).shape(),
        "{what}: operand shapes differ"
    );
}

/// Elementwise and reduction ops. Binary elementwise ops require equal
/// shapes and panic otherwise; ops whose shapes come from user data return
/// `Result`.
impl Graph {
    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        same_shape(self, a, b, "add");
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        same_shape(self, a, b, "sub");
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        same_shape(self, a, b, "mul");
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        same_shape(self, a, b, "div");
        let v = self.value(a).zip_map(self.value(b), |x, y| x / y);
        self.push(v, Op::Div(a, b))
    }

    pub fn add_scalar(&mut self, a: NodeId, c: Scalar) -> NodeId {
        let v = self.value(a).map(|x| x + c);
        self.push(v, Op::AddScalar(a))
    }

    pub fn mul_scalar(&mut self, a: NodeId, c: Scalar) -> NodeId {
        let v = self.value(a).map(|x| x * c);
        self.push(v, Op::MulScalar(a, c))
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.mul_scalar(a, -1.0)
    }

    /// Elementwise product with a constant array of the same shape.
    pub fn mul_const(&mut self, a: NodeId, c: NdArray) -> Result<NodeId> {
        if self.value(a).shape() != c.shape() {
            return Err(Error::usage(format!(
                "mul_const: {:?} vs {:?}",
                self.value(a).shape(),
                c.shape()
            )));
        }
        let v = self.value(a).zip_map(&c, |x, y| x * y);
        Ok(self.push(v, Op::MulConst(a, c)))
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(Scalar::abs);
        self.push(v, Op::Abs(a))
    }

    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(Scalar::sqrt);
        self.push(v, Op::Sqrt(a))
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(Scalar::ln);
        self.push(v, Op::Ln(a))
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push(v, Op::Relu(a))
    }

    /// `sign(x)·|x|^p`, which equals `x^p` for non-negative inputs.
    pub fn signed_pow(&mut self, a: NodeId, p: Scalar) -> NodeId {
        let v = self.value(a).map(|x| sign(x) * x.abs().powf(p));
        self.push(v, Op::SignedPow(a, p))
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let v = self.value(a).reshape(shape)?;
        Ok(self.push(v, Op::Reshape(a)))
    }

    /// Sum over every axis but the first: `[B, ...] -> [B]`.
    pub fn sum_rows(&mut self, a: NodeId) -> NodeId {
        let x = self.value(a);
        let data = x
            .data()
            .chunks(x.row_len())
            .map(|r| r.iter().sum())
            .collect();
        let v = NdArray::new(vec![x.shape()[0]], data).unwrap();
        self.push(v, Op::SumRows(a))
    }

    /// Mean over every axis but the first.
    pub fn mean_rows(&mut self, a: NodeId) -> NodeId {
        let n = self.value(a).row_len() as Scalar;
        let s = self.sum_rows(a);
        self.mul_scalar(s, 1.0 / n)
    }

    /// Repeat a `[B]` vector across the trailing axes of `shape`.
    pub fn broadcast_rows(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let x = self.value(a);
        if x.rank() != 1 || shape.first() != Some(&x.shape()[0]) {
            return Err(Error::usage(format!(
                "broadcast_rows: cannot expand {:?} to {shape:?}",
                x.shape()
            )));
        }
        let w: usize = shape[1..].iter().product();
        let data = x
            .data()
            .iter()
            .flat_map(|&v| std::iter::repeat_n(v, w))
            .collect();
        let v = NdArray::new(shape.to_vec(), data)?;
        Ok(self.push(v, Op::BroadcastRows(a)))
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let v = NdArray::scalar(self.value(a).sum());
        self.push(v, Op::SumAll(a))
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let n = self.value(a).len() as Scalar;
        let s = self.sum_all(a);
        self.mul_scalar(s, 1.0 / n)
    }

    /// Pick one column per row of a `[B, K]` array.
    pub fn gather(&mut self, a: NodeId, index: &[usize]) -> Result<NodeId> {
        let x = self.value(a);
        if x.rank() != 2 || x.shape()[0] != index.len() {
            return Err(Error::usage(format!(
                "gather: {} indices for shape {:?}",
                index.len(),
                x.shape()
            )));
        }
        let k = x.shape()[1];
        if let Some(&bad) = index.iter().find(|&&t| t >= k) {
            return Err(Error::data(format!(
                "class index {bad} out of range [0, {k})"
            )));
        }
        let data = index
            .iter()
            .enumerate()
            .map(|(r, &t)| x.data()[r * k + t])
            .collect();
        let v = NdArray::new(vec![index.len()], data)?;
        Ok(self.push(v, Op::Gather(a, index.to_vec())))
    }

    /// 2-D convolution of a `[B, C, H, W]` input.
    pub fn conv2d(
        &mut self,
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        padding: usize,
        stride: usize,
    ) -> Result<NodeId> {
        let (xs, ws) = (self.value(input).shape(), self.value(weight).shape());
        if xs.len() != 4 || ws.len() != 4 || ws[1] != xs[1] || ws[2] != ws[3] {
            return Err(Error::config(format!(
                "conv2d: input {xs:?} vs weight {ws:?}"
            )));
        }
        if self.value(bias).shape() != [ws[0]] {
            return Err(Error::config(
                "conv2d: bias length must equal output channels",
            ));
        }
        if stride == 0 || xs[2] + 2 * padding < ws[2] || xs[3] + 2 * padding < ws[2] {
            return Err(Error::config(format!(
                "conv2d: kernel {} does not fit input {xs:?} with padding {padding}",
                ws[2]
            )));
        }
        let geom = ConvGeom {
            in_ch: xs[1],
            in_h: xs[2],
            in_w: xs[3],
            out_ch: ws[0],
            kernel: ws[2],
            padding,
            stride,
        };
        let batch = xs[0];
        let data = kernels::conv2d_forward(
            &geom,
            batch,
            self.value(input).data(),
            self.value(weight).data(),
            self.value(bias).data(),
        );
        let v = NdArray::new(vec![batch, geom.out_ch, geom.out_h(), geom.out_w()], data)?;
        Ok(self.push(
            v,
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
            },
        ))
    }

    /// 2×2 max pooling, stride 2.
    pub fn maxpool2(&mut self, input: NodeId) -> Result<NodeId> {
        let s = self.value(input).shape().to_vec();
        if s.len() != 4 || s[2] < 2 || s[3] < 2 {
            return Err(Error::config(format!(
                "maxpool2 needs [B,C,H>=2,W>=2], got {s:?}"
            )));
        }
        let (data, argmax) = kernels::maxpool2_forward(&s, self.value(input).data());
        let v = NdArray::new(vec![s[0], s[1], s[2] / 2, s[3] / 2], data)?;
        Ok(self.push(v, Op::MaxPool2 { input, argmax }))
    }

    /// Affine map of a `[B, in]` input with weight `[out, in]`.
    pub fn dense(&mut self, input: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        let (xs, ws) = (self.value(input).shape(), self.value(weight).shape());
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
            return Err(Error::config(format!(
                "dense: input {xs:?} vs weight {ws:?}"
            )));
        }
        if self.value(bias).shape() != [ws[0]] {
            return Err(Error::config(
                "dense: bias length must equal output features",
            ));
        }
        let (batch, in_f, out_f) = (xs[0], xs[1], ws[0]);
        let data = kernels::dense_forward(
            batch,
            in_f,
            out_f,
            self.value(input).data(),
            self.value(weight).data(),
            self.value(bias).data(),
        );
        let v = NdArray::new(vec![batch, out_f], data)?;
        Ok(self.push(
            v,
            Op::Dense {
                input,
                weight,
                bias,
            },
        ))
    }

    /// Per-sample binary cross-entropy on logits, stable for any magnitude:
    /// `max(s,0) − s·y + ln(1 + e^{−|s|})`. Returns `[B]`.
    pub fn bce_with_logits_per_sample(
        &mut self,
        logits: NodeId,
        targets: &[Scalar],
    ) -> Result<NodeId> {
        let s = self.value(logits);
        if s.len() != targets.len() {
            return Err(Error::usage(format!(
                "bce: {} logits for {} targets",
                s.len(),
                targets.len()
            )));
        }
        if targets.iter().any(|&y| y != 0.0 && y != 1.0) {
            return Err(Error::data("bce targets must be 0 or 1"));
        }
        let data = s
            .data()
            .iter()
            .zip(targets)
            .map(|(&s, &y)| s.max(0.0) - s * y + (-s.abs()).exp().ln_1p())
            .collect();
        let v = NdArray::new(vec![targets.len()], data)?;
        Ok(self.push(
            v,
            Op::SigmoidBce {
                logits,
                targets: targets.to_vec(),
            },
        ))
    }

    /// Per-sample categorical cross-entropy on `[B, K]` logits. Returns `[B]`.
    pub fn cce_with_logits_per_sample(
        &mut self,
        logits: NodeId,
        targets: &[usize],
    ) -> Result<NodeId> {
        let s = self.value(logits);
        if s.rank() != 2 || s.shape()[0] != targets.len() {
            return Err(Error::usage(format!(
                "cce: logits {:?} for {} targets",
                s.shape(),
                targets.len()
            )));
        }
        let k = s.shape()[1];
        if let Some(&bad) = targets.iter().find(|&&t| t >= k) {
            return Err(Error::data(format!(
                "class index {bad} out of range [0, {k})"
            )));
        }
        let mut probs = Vec::with_capacity(s.len());
        let mut losses = Vec::with_capacity(targets.len());
        for (row, &t) in s.data().chunks(k).zip(targets) {
            let m = row.iter().cloned().fold(Scalar::NEG_INFINITY, Scalar::max);
            let z: Scalar = row.iter().map(|&v| (v - m).exp()).sum();
            let lse = m + z.ln();
            losses.push(lse - row[t]);
            probs.extend(row.iter().map(|&v| (v - lse).exp()));
        }
        let v = NdArray::new(vec![targets.len()], losses)?;
        Ok(self.push(
            v,
            Op::SoftmaxCe {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        ))
    }

    /// `out[b] = Σ_k alpha[b,k] · act[b,k]` for `act` of shape `[B, K, H, W]`.
    /// `alpha` is a constant: gradients reach `act` only.
    pub fn channel_weighted_sum(&mut self, act: NodeId, alpha: NdArray) -> Result<NodeId> {
        let a = self.value(act);
        if a.rank() != 4 || alpha.shape() != [a.shape()[0], a.shape()[1]] {
            return Err(Error::usage(format!(
                "channel weights {:?} do not match activation {:?}",
                alpha.shape(),
                a.shape()
            )));
        }
        let (b, k, h, w) = (a.shape()[0], a.shape()[1], a.shape()[2], a.shape()[3]);
        let plane = h * w;
        let mut out = vec![0.0; b * plane];
        for s in 0..b {
            let dst = &mut out[s * plane..(s + 1) * plane];
            for c in 0..k {
                let wgt = alpha.data()[s * k + c];
                let src = &a.data()[(s * k + c) * plane..(s * k + c + 1) * plane];
                for (o, &x) in dst.iter_mut().zip(src) {
                    *o += wgt * x;
                }
            }
        }
        let v = NdArray::new(vec![b, h, w], out)?;
        Ok(self.push(v, Op::ChannelWeightedSum { act, alpha }))
    }

    /// A user-defined unary op with an explicit backward rule.
    pub fn custom_unary(
        &mut self,
        a: NodeId,
        forward: impl Fn(&NdArray) -> NdArray,
        backward: BackwardFn,
    ) -> NodeId {
        let v = forward(self.value(a));
        self.push(v, Op::Custom(a, backward))
    }
}
