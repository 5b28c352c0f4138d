//! Heatmap similarity scores.
//!
//! Every kind is oriented so that a larger value means the two maps are more
//! alike; training minimizes `λ_sim · score` to push maps apart. Pixel kinds
//! use the raw maps; `neg-kl`, `neg-js-div`, `neg-jsd` and `cosine` first
//! L1-normalize each map into a distribution. Batched inputs return the mean
//! over the batch.
//!
//! By position, `a` is the label-model map and `b` the confounder-model map.
//! Only `neg-kl` cares: it is `−D_KL(P_b ‖ P_a)`.

use std::fmt;
use std::str::FromStr;

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::tensor::NdArray;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SimilarityKind {
    NegMae,
    NegMse,
    NegRmse,
    SoftIou,
    NegKl,
    NegJsDiv,
    NegJsd,
    Cosine,
    Ncc,
    Ssim,
    SoftDice,
}

impl SimilarityKind {
    pub const ALL: [SimilarityKind; 11] = [
        SimilarityKind::NegMae,
        SimilarityKind::NegMse,
        SimilarityKind::NegRmse,
        SimilarityKind::SoftIou,
        SimilarityKind::NegKl,
        SimilarityKind::NegJsDiv,
        SimilarityKind::NegJsd,
        SimilarityKind::Cosine,
        SimilarityKind::Ncc,
        SimilarityKind::Ssim,
        SimilarityKind::SoftDice,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SimilarityKind::NegMae => "neg-mae",
            SimilarityKind::NegMse => "neg-mse",
            SimilarityKind::NegRmse => "neg-rmse",
            SimilarityKind::SoftIou => "soft-iou",
            SimilarityKind::NegKl => "neg-kl",
            SimilarityKind::NegJsDiv => "neg-js-div",
            SimilarityKind::NegJsd => "neg-jsd",
            SimilarityKind::Cosine => "cosine",
            SimilarityKind::Ncc => "ncc",
            SimilarityKind::Ssim => "ssim",
            SimilarityKind::SoftDice => "soft-dice",
        }
    }

    /// Whether the kind compares L1-normalized distributions.
    pub fn is_distributional(self) -> bool {
        matches!(
            self,
            SimilarityKind::NegKl
                | SimilarityKind::NegJsDiv
                | SimilarityKind::NegJsd
                | SimilarityKind::Cosine
        )
    }

    pub fn is_symmetric(self) -> bool {
        self != SimilarityKind::NegKl
    }
}

impl fmt::Display for SimilarityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SimilarityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SimilarityKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = SimilarityKind::ALL.iter().map(|k| k.name()).collect();
                Error::usage(format!(
                    "unknown similarity '{s}', expected one of: {}",
                    names.join(", ")
                ))
            })
    }
}

/// SSIM constants; `C1 = (k1·L)²`, `C2 = (k2·L)²`, `C3 = C2/2` where `L` is
/// the larger maximum of the two maps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    pub k1: Scalar,
    pub k2: Scalar,
    pub alpha: Scalar,
    pub beta: Scalar,
    pub gamma: Scalar,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams {
            k1: 0.01,
            k2: 0.03,
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub kind: SimilarityKind,
    pub eps: Scalar,
    pub ssim: SsimParams,
}

impl Similarity {
    pub fn new(kind: SimilarityKind) -> Self {
        Similarity {
            kind,
            eps: 1e-8,
            ssim: SsimParams::default(),
        }
    }

    /// Batch-mean score of two `[B, H, W]` (or `[H, W]`) map nodes.
    pub fn evaluate(&self, g: &mut Graph, a: NodeId, b: NodeId) -> Result<NodeId> {
        let per = self.per_sample(g, a, b)?;
        Ok(g.mean_all(per))
    }

    /// Score of each sample, `[B]`.
    pub fn per_sample(&self, g: &mut Graph, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (g.value(a).shape().to_vec(), g.value(b).shape().to_vec());
        if sa != sb {
            return Err(Error::usage(format!(
                "similarity of maps with shapes {sa:?} and {sb:?}"
            )));
        }
        let (rows, n) = match sa.len() {
            2 => (1, sa[0] * sa[1]),
            3 => (sa[0], sa[1] * sa[2]),
            _ => {
                return Err(Error::usage(format!(
                    "maps must be [H, W] or [B, H, W], got {sa:?}"
                )))
            }
        };
        let a = g.reshape(a, &[rows, n])?;
        let b = g.reshape(b, &[rows, n])?;
        let mut r = Rows { g, rows, n };
        let eps = self.eps;
        Ok(match self.kind {
            SimilarityKind::NegMae => {
                let d = r.g.sub(a, b);
                let d = r.g.abs(d);
                let m = r.g.mean_rows(d);
                r.g.neg(m)
            }
            SimilarityKind::NegMse => {
                let m = r.mse(a, b);
                r.g.neg(m)
            }
            SimilarityKind::NegRmse => {
                let m = r.mse(a, b);
                let s = r.g.sqrt(m);
                r.g.neg(s)
            }
            SimilarityKind::SoftIou => {
                let ab = r.g.mul(a, b);
                let inter = r.g.sum_rows(ab);
                let s = r.g.add(a, b);
                let u = r.g.sub(s, ab);
                let union = r.g.sum_rows(u);
                let den = r.g.add_scalar(union, eps);
                r.g.div(inter, den)
            }
            SimilarityKind::SoftDice => {
                let ab = r.g.mul(a, b);
                let inter = r.g.sum_rows(ab);
                let num = r.g.mul_scalar(inter, 2.0);
                let sa = r.g.sum_rows(a);
                let sb = r.g.sum_rows(b);
                let s = r.g.add(sa, sb);
                let den = r.g.add_scalar(s, eps);
                r.g.div(num, den)
            }
            SimilarityKind::NegKl => {
                let q = r.l1_normalize(a, eps)?;
                let p = r.l1_normalize(b, eps)?;
                let d = r.kl(p, q, eps);
                r.g.neg(d)
            }
            SimilarityKind::NegJsDiv => {
                let q = r.l1_normalize(a, eps)?;
                let p = r.l1_normalize(b, eps)?;
                let js = r.js(p, q, eps);
                r.g.neg(js)
            }
            SimilarityKind::NegJsd => {
                let q = r.l1_normalize(a, eps)?;
                let p = r.l1_normalize(b, eps)?;
                let js = r.js(p, q, eps);
                let js = r.g.relu(js);
                let d = r.g.sqrt(js);
                r.g.neg(d)
            }
            SimilarityKind::Cosine => {
                let q = r.l1_normalize(a, eps)?;
                let p = r.l1_normalize(b, eps)?;
                let pq = r.g.mul(p, q);
                let dot = r.g.sum_rows(pq);
                let np = r.norm(p);
                let nq = r.norm(q);
                let den = r.g.mul(np, nq);
                let den = r.g.add_scalar(den, eps);
                r.g.div(dot, den)
            }
            SimilarityKind::Ncc => {
                let ca = r.centered(a)?;
                let cb = r.centered(b)?;
                let prod = r.g.mul(ca, cb);
                let cov = r.g.sum_rows(prod);
                let na = r.norm(ca);
                let nb = r.norm(cb);
                let den = r.g.mul(na, nb);
                let den = r.g.add_scalar(den, eps);
                r.g.div(cov, den)
            }
            SimilarityKind::Ssim => r.ssim(a, b, &self.ssim)?,
        })
    }

    /// Score of two plain maps of equal shape.
    pub fn evaluate_arrays(&self, a: &NdArray, b: &NdArray) -> Result<Scalar> {
        let mut g = Graph::new();
        let an = g.constant(a.clone());
        let bn = g.constant(b.clone());
        let s = self.evaluate(&mut g, an, bn)?;
        g.value(s).item()
    }
}

/// `p_i = (v_i + ε/n) / (Σv + ε)`: sums to one and falls back to the
/// uniform distribution for an all-zero map. A `[B, H, W]` input is
/// normalized per sample.
pub fn l1_normalize(map: &NdArray, eps: Scalar) -> NdArray {
    let n = if map.rank() == 3 {
        map.row_len()
    } else {
        map.len()
    };
    let mut out = map.clone();
    for row in out.data_mut().chunks_mut(n) {
        let s: Scalar = row.iter().sum();
        for v in row.iter_mut() {
            *v = (*v + eps / n as Scalar) / (s + eps);
        }
    }
    out
}

struct Rows<'g> {
    g: &'g mut Graph,
    rows: usize,
    n: usize,
}

impl Rows<'_> {
    fn bcast(&mut self, v: NodeId) -> Result<NodeId> {
        self.g.broadcast_rows(v, &[self.rows, self.n])
    }

    fn mse(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let d = self.g.sub(a, b);
        let sq = self.g.square(d);
        self.g.mean_rows(sq)
    }

    /// Row-wise L2 norm, `[B]`.
    fn norm(&mut self, x: NodeId) -> NodeId {
        let sq = self.g.square(x);
        let s = self.g.sum_rows(sq);
        self.g.sqrt(s)
    }

    fn centered(&mut self, x: NodeId) -> Result<NodeId> {
        let m = self.g.mean_rows(x);
        let m = self.bcast(m)?;
        Ok(self.g.sub(x, m))
    }

    fn l1_normalize(&mut self, x: NodeId, eps: Scalar) -> Result<NodeId> {
        let s = self.g.sum_rows(x);
        let s = self.g.add_scalar(s, eps);
        let s = self.bcast(s)?;
        let shifted = self.g.add_scalar(x, eps / self.n as Scalar);
        Ok(self.g.div(shifted, s))
    }

    /// `Σ p ln((p+ε)/(q+ε))` per row.
    fn kl(&mut self, p: NodeId, q: NodeId, eps: Scalar) -> NodeId {
        let pe = self.g.add_scalar(p, eps);
        let qe = self.g.add_scalar(q, eps);
        let lp = self.g.ln(pe);
        let lq = self.g.ln(qe);
        let d = self.g.sub(lp, lq);
        let t = self.g.mul(p, d);
        self.g.sum_rows(t)
    }

    fn js(&mut self, p: NodeId, q: NodeId, eps: Scalar) -> NodeId {
        let s = self.g.add(p, q);
        let m = self.g.mul_scalar(s, 0.5);
        let dp = self.kl(p, m, eps);
        let dq = self.kl(q, m, eps);
        let t = self.g.add(dp, dq);
        self.g.mul_scalar(t, 0.5)
    }

    fn ssim(&mut self, a: NodeId, b: NodeId, p: &SsimParams) -> Result<NodeId> {
        let (c1, c2, c3) = self.ssim_constants(a, b, p)?;
        let dof = 1.0 / (self.n.max(2) - 1) as Scalar;

        let mu_a = self.g.mean_rows(a);
        let mu_b = self.g.mean_rows(b);
        let ca = self.centered(a)?;
        let cb = self.centered(b)?;
        let sq_a = self.g.square(ca);
        let sq_b = self.g.square(cb);
        let var_a = self.g.sum_rows(sq_a);
        let var_a = self.g.mul_scalar(var_a, dof);
        let var_b = self.g.sum_rows(sq_b);
        let var_b = self.g.mul_scalar(var_b, dof);
        let prod = self.g.mul(ca, cb);
        let cov = self.g.sum_rows(prod);
        let cov = self.g.mul_scalar(cov, dof);
        let sd_a = self.g.sqrt(var_a);
        let sd_b = self.g.sqrt(var_b);
        let sd_ab = self.g.mul(sd_a, sd_b);

        // luminance
        let mm = self.g.mul(mu_a, mu_b);
        let num = self.g.mul_scalar(mm, 2.0);
        let num = self.g.add(num, c1);
        let ma2 = self.g.square(mu_a);
        let mb2 = self.g.square(mu_b);
        let den = self.g.add(ma2, mb2);
        let den = self.g.add(den, c1);
        let l = self.g.div(num, den);
        // contrast
        let num = self.g.mul_scalar(sd_ab, 2.0);
        let num = self.g.add(num, c2);
        let den = self.g.add(var_a, var_b);
        let den = self.g.add(den, c2);
        let c = self.g.div(num, den);
        // structure
        let num = self.g.add(cov, c3);
        let den = self.g.add(sd_ab, c3);
        let s = self.g.div(num, den);

        let l = self.pow(l, p.alpha);
        let c = self.pow(c, p.beta);
        let s = self.pow(s, p.gamma);
        let lc = self.g.mul(l, c);
        Ok(self.g.mul(lc, s))
    }

    /// `C1`, `C2`, `C3` per sample from the dynamic range `L`, the larger
    /// maximum of the two maps. `L` follows its argmax pixel, so gradients flow
    /// into it except at ties; below `1e-8` it is the constant `1e-8`.
    fn ssim_constants(
        &mut self,
        a: NodeId,
        b: NodeId,
        p: &SsimParams,
    ) -> Result<(NodeId, NodeId, NodeId)> {
        let argmax = |row: &[Scalar]| {
            row.iter()
                .enumerate()
                .fold((0, Scalar::NEG_INFINITY), |best, (i, &v)| {
                    if v > best.1 {
                        (i, v)
                    } else {
                        best
                    }
                })
        };
        let (mut ia, mut ib) = (Vec::new(), Vec::new());
        let (mut from_a, mut from_b, mut floor) = (Vec::new(), Vec::new(), Vec::new());
        {
            let (va, vb) = (self.g.value(a), self.g.value(b));
            for i in 0..self.rows {
                let (ja, ma) = argmax(va.row(i));
                let (jb, mb) = argmax(vb.row(i));
                ia.push(ja);
                ib.push(jb);
                let big = ma.max(mb) >= 1e-8;
                let flag = |on: bool| if on { 1.0 } else { 0.0 };
                from_a.push(flag(big && ma >= mb));
                from_b.push(flag(big && ma < mb));
                floor.push(if big { 0.0 } else { 1e-8 });
            }
        }
        let ga = self.g.gather(a, &ia)?;
        let ga = self.g.mul_const(ga, NdArray::from_vec(from_a))?;
        let gb = self.g.gather(b, &ib)?;
        let gb = self.g.mul_const(gb, NdArray::from_vec(from_b))?;
        let range = self.g.add(ga, gb);
        let fl = self.g.constant(NdArray::from_vec(floor));
        let range = self.g.add(range, fl);
        let r2 = self.g.square(range);
        let c1 = self.g.mul_scalar(r2, p.k1 * p.k1);
        let c2 = self.g.mul_scalar(r2, p.k2 * p.k2);
        let c3 = self.g.mul_scalar(r2, p.k2 * p.k2 / 2.0);
        Ok((c1, c2, c3))
    }

    fn pow(&mut self, x: NodeId, e: Scalar) -> NodeId {
        if e == 1.0 {
            x
        } else {
            self.g.signed_pow(x, e)
        }
    }
}
