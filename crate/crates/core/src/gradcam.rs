//! Grad-CAM channel weights and heatmaps.
//!
//! Channel weights are the spatially averaged gradients of a target logit
//! with respect to the captured activation. They are obtained with
//! [`Graph::grad_of`] and enter the heatmap as constants, while the
//! activation itself stays attached, so a loss on the heatmap trains the
//! convolutional layers without any second-order terms.

use std::fs;
use std::path::Path;

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::nn::{ForwardTrace, HeadKind};
use crate::tensor::NdArray;
use crate::Scalar;

/// Per-sample channel weights, `[B, K]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CamWeights {
    pub alpha: NdArray,
}

/// One heatmap per sample, `[B, H, W]`, still attached to the graph.
#[derive(Debug, Clone, Copy)]
pub struct Heatmap {
    pub node: NodeId,
}

impl Heatmap {
    /// Plain copy of the map of sample `i`, `[H, W]`.
    pub fn export(&self, g: &Graph, i: usize) -> NdArray {
        let v = g.value(self.node);
        let s = v.shape();
        NdArray::new(vec![s[1], s[2]], v.row(i).to_vec()).expect("row of a [B, H, W] array")
    }
}

/// Per-sample target logit `[B]`.
///
/// Multiclass heads select the target column. A binary head has one logit
/// `s` for class 1, so the target score is `s` for target 1 and `−s` for
/// target 0; both increase with confidence in the target class.
pub fn target_logit(
    g: &mut Graph,
    logits: NodeId,
    targets: &[usize],
    head: HeadKind,
) -> Result<NodeId> {
    let shape = g.value(logits).shape().to_vec();
    if shape.first() != Some(&targets.len()) {
        return Err(Error::usage(format!(
            "{} targets for logits of shape {shape:?}",
            targets.len()
        )));
    }
    match head {
        HeadKind::Binary => {
            if let Some(bad) = targets.iter().find(|&&t| t > 1) {
                return Err(Error::data(format!("binary target {bad} is not 0 or 1")));
            }
            let sign = targets
                .iter()
                .map(|&t| if t == 1 { 1.0 } else { -1.0 })
                .collect();
            let flat = g.reshape(logits, &[targets.len()])?;
            g.mul_const(flat, NdArray::new(vec![targets.len()], sign)?)
        }
        HeadKind::Multiclass(k) => {
            if let Some(bad) = targets.iter().find(|&&t| t >= k) {
                return Err(Error::data(format!(
                    "class index {bad} out of range [0, {k})"
                )));
            }
            g.gather(logits, targets)
        }
    }
}

/// `α[b,k] = (1/P) Σ_ij ∂ŝ_b/∂A[b,k,i,j]` with `P = H·W`.
///
/// Uses the gradient of `Σ_b ŝ_b`; samples do not interact in the forward
/// pass, so row `b` of that gradient is the gradient of `ŝ_b` alone.
pub fn cam_weights(g: &mut Graph, activation: NodeId, target_scores: NodeId) -> Result<CamWeights> {
    let total = g.sum_all(target_scores);
    let grad = g.grad_of(total, activation)?;
    let s = grad.shape();
    if s.len() != 4 {
        return Err(Error::usage(format!(
            "activation must be [B, K, H, W], got {s:?}"
        )));
    }
    let (b, k, p) = (s[0], s[1], s[2] * s[3]);
    let alpha: Vec<Scalar> = grad
        .data()
        .chunks(p)
        .map(|plane| plane.iter().sum::<Scalar>() / p as Scalar)
        .collect();
    Ok(CamWeights {
        alpha: NdArray::new(vec![b, k], alpha)?,
    })
}

/// `ReLU(Σ_k α_k A^k)` per sample, with `α` constant.
pub fn heatmap(g: &mut Graph, activation: NodeId, weights: &CamWeights) -> Result<Heatmap> {
    let lin = g.channel_weighted_sum(activation, weights.alpha.clone())?;
    Ok(Heatmap { node: g.relu(lin) })
}

/// Target scores, weights and heatmaps for one model and one set of targets.
#[derive(Debug, Clone)]
pub struct Cam {
    pub target: NodeId,
    pub weights: CamWeights,
    pub heatmap: Heatmap,
}

pub fn compute(
    g: &mut Graph,
    trace: &ForwardTrace,
    targets: &[usize],
    head: HeadKind,
) -> Result<Cam> {
    let target = target_logit(g, trace.logits, targets, head)?;
    let weights = cam_weights(g, trace.activation, target)?;
    let heatmap = heatmap(g, trace.activation, &weights)?;
    Ok(Cam {
        target,
        weights,
        heatmap,
    })
}

/// 8-bit pixels of a map: `floor(255·(v − min)/(max − min))`, all zero when
/// the map is constant.
pub fn to_gray(map: &NdArray) -> Result<Vec<u8>> {
    if !map.all_finite() {
        return Err(Error::data("heatmap contains non-finite values"));
    }
    let (lo, hi) = (map.min(), map.max());
    if hi <= lo {
        return Ok(vec![0; map.len()]);
    }
    Ok(map
        .data()
        .iter()
        .map(|&v| (255.0 * (v - lo) / (hi - lo)).floor().clamp(0.0, 255.0) as u8)
        .collect())
}

/// Binary PGM (P5, maxval 255) encoding of an `[H, W]` map.
pub fn pgm_bytes(map: &NdArray) -> Result<Vec<u8>> {
    let [h, w] = map.shape() else {
        return Err(Error::usage(format!(
            "heatmap must be [H, W], got {:?}",
            map.shape()
        )));
    };
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(to_gray(map)?);
    Ok(out)
}

pub fn export_heatmap(map: &NdArray, path: &Path) -> Result<()> {
    fs::write(path, pgm_bytes(map)?)?;
    Ok(())
}

/// `{split}_{index}_{model}.pgm`
pub fn heatmap_file_name(split: &str, index: usize, model: &str) -> String {
    format!("{split}_{index}_{model}.pgm")
}
