//! Online exponentiated-gradient group weights for GroupDRO.

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::tensor::NdArray;
use crate::Scalar;

/// Per-group weights `q`, a probability vector. They persist across epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupWeights {
    q: Vec<Scalar>,
}

impl GroupWeights {
    pub fn uniform(n_groups: usize) -> Self {
        GroupWeights {
            q: vec![1.0 / n_groups as Scalar; n_groups],
        }
    }

    pub fn from_weights(q: Vec<Scalar>) -> Result<Self> {
        let s: Scalar = q.iter().sum();
        if q.is_empty() || q.iter().any(|&v| !v.is_finite() || v < 0.0) || (s - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "group weights {q:?} are not a probability vector"
            )));
        }
        Ok(GroupWeights { q })
    }

    pub fn q(&self) -> &[Scalar] {
        &self.q
    }

    /// Mean loss of each group present in the batch.
    pub fn group_means(&self, losses: &[Scalar], groups: &[usize]) -> Result<Vec<Option<Scalar>>> {
        if losses.len() != groups.len() {
            return Err(Error::usage("one group id per loss is required"));
        }
        let mut sum = vec![0.0; self.q.len()];
        let mut count = vec![0usize; self.q.len()];
        for (&l, &g) in losses.iter().zip(groups) {
            if g >= self.q.len() {
                return Err(Error::data(format!(
                    "group {g} outside [0, {})",
                    self.q.len()
                )));
            }
            sum[g] += l;
            count[g] += 1;
        }
        Ok(sum
            .iter()
            .zip(&count)
            .map(|(&s, &n)| (n > 0).then(|| s / n as Scalar))
            .collect())
    }

    /// `q_g ← q_g · exp(η ℓ_g)` for groups in the batch, then renormalize.
    pub fn update(&mut self, losses: &[Scalar], groups: &[usize], eta: Scalar) -> Result<()> {
        let means = self.group_means(losses, groups)?;
        // shift by the largest exponent so exp never overflows; cancels on renormalizing
        let shift = means
            .iter()
            .flatten()
            .map(|&l| eta * l)
            .fold(0.0, Scalar::max);
        for (q, m) in self.q.iter_mut().zip(&means) {
            *q *= match m {
                Some(l) => (eta * l - shift).exp(),
                None => (-shift).exp(),
            };
        }
        let z: Scalar = self.q.iter().sum();
        self.q.iter_mut().for_each(|q| *q /= z);
        Ok(())
    }

    /// `Σ_g q_g ℓ_g` over groups present in the batch, where `ℓ_g` is the
    /// group's mean per-sample loss.
    pub fn weighted_loss(
        &self,
        g: &mut Graph,
        per_sample: NodeId,
        groups: &[usize],
    ) -> Result<NodeId> {
        let mut count = vec![0usize; self.q.len()];
        for &k in groups {
            if k >= self.q.len() {
                return Err(Error::data(format!(
                    "group {k} outside [0, {})",
                    self.q.len()
                )));
            }
            count[k] += 1;
        }
        let w: Vec<Scalar> = groups
            .iter()
            .map(|&k| self.q[k] / count[k] as Scalar)
            .collect();
        let weighted = g.mul_const(per_sample, NdArray::from_vec(w))?;
        Ok(g.sum_all(weighted))
    }
}
