//! Accuracy by group and the linear-MMD latent diagnostic.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::Scalar;

/// Average and worst-group accuracy of one split.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    pub aa: Scalar,
    pub wga: Scalar,
    /// Accuracy per group id, `None` for groups without examples.
    pub group_acc: Vec<Option<Scalar>>,
    pub group_count: Vec<usize>,
}

impl AccuracyReport {
    /// `(WGA + AA) / 2`, the checkpoint selection score.
    pub fn selection_score(&self) -> Scalar {
        (self.wga + self.aa) / 2.0
    }
}

/// AA over all examples; WGA is the minimum accuracy over non-empty groups.
pub fn accuracy_report(
    preds: &[usize],
    labels: &[usize],
    groups: &[usize],
    n_groups: usize,
) -> Result<AccuracyReport> {
    if preds.is_empty() {
        return Err(Error::usage("accuracy of an empty split"));
    }
    if preds.len() != labels.len() || preds.len() != groups.len() {
        return Err(Error::usage(
            "predictions, labels and groups differ in length",
        ));
    }
    let mut correct = vec![0usize; n_groups];
    let mut count = vec![0usize; n_groups];
    for ((&p, &y), &g) in preds.iter().zip(labels).zip(groups) {
        if g >= n_groups {
            return Err(Error::data(format!("group {g} outside [0, {n_groups})")));
        }
        count[g] += 1;
        correct[g] += usize::from(p == y);
    }
    let total: usize = correct.iter().sum();
    let group_acc: Vec<Option<Scalar>> = correct
        .iter()
        .zip(&count)
        .map(|(&c, &n)| (n > 0).then(|| c as Scalar / n as Scalar))
        .collect();
    let wga = group_acc
        .iter()
        .flatten()
        .cloned()
        .fold(Scalar::INFINITY, Scalar::min);
    Ok(AccuracyReport {
        aa: total as Scalar / preds.len() as Scalar,
        wga,
        group_acc,
        group_count: count,
    })
}

/// Row-major `n × d` latent vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBatch {
    pub dim: usize,
    pub data: Vec<Scalar>,
}

impl LatentBatch {
    pub fn new(dim: usize, data: Vec<Scalar>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::usage(format!(
                "{} values do not form rows of width {dim}",
                data.len()
            )));
        }
        Ok(LatentBatch { dim, data })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[Scalar] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn select(&self, rows: &[usize]) -> LatentBatch {
        let mut data = Vec::with_capacity(rows.len() * self.dim);
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        LatentBatch {
            dim: self.dim,
            data,
        }
    }

    pub fn mean(&self) -> Vec<Scalar> {
        let mut m = vec![0.0; self.dim];
        for i in 0..self.len() {
            for (a, &v) in m.iter_mut().zip(self.row(i)) {
                *a += v;
            }
        }
        let n = self.len() as Scalar;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }
}

/// `‖μ_a − μ_b‖²`, divided by the latent width when `per_dim` is set so that
/// models of different widths are comparable.
pub fn linear_mmd(a: &LatentBatch, b: &LatentBatch, per_dim: bool) -> Result<Scalar> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::usage("linear MMD of an empty batch"));
    }
    if a.dim != b.dim {
        return Err(Error::usage(format!(
            "latent widths differ: {} vs {}",
            a.dim, b.dim
        )));
    }
    let d: Scalar = a
        .mean()
        .iter()
        .zip(b.mean())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(if per_dim { d / a.dim as Scalar } else { d })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Partition {
    ByLabel,
    ByConfounder,
    ByEnv,
}

impl Partition {
    pub const ALL: [Partition; 3] = [
        Partition::ByLabel,
        Partition::ByConfounder,
        Partition::ByEnv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Partition::ByLabel => "by-label",
            Partition::ByConfounder => "by-confounder",
            Partition::ByEnv => "by-env",
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Partition::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                Error::usage(format!(
                    "unknown partition '{s}', expected one of: by-label, by-confounder, by-env"
                ))
            })
    }
}

/// Linear MMD between the parts of a partition of the rows of `latents`.
/// Two parts give their MMD; more parts give the mean over all pairs.
pub fn mmd_partition(latents: &LatentBatch, keys: &[usize], per_dim: bool) -> Result<Scalar> {
    if keys.len() != latents.len() {
        return Err(Error::usage("one partition key per latent row is required"));
    }
    let n_keys = keys.iter().max().map_or(0, |&k| k + 1);
    let mut parts = vec![Vec::new(); n_keys];
    for (i, &k) in keys.iter().enumerate() {
        parts[k].push(i);
    }
    parts.retain(|p| !p.is_empty());
    if parts.len() < 2 {
        return Err(Error::usage(format!(
            "partition has {} non-empty parts, need 2",
            parts.len()
        )));
    }
    let batches: Vec<LatentBatch> = parts.iter().map(|p| latents.select(p)).collect();
    let mut total = 0.0;
    let mut pairs = 0;
    for i in 0..batches.len() {
        for j in i + 1..batches.len() {
            total += linear_mmd(&batches[i], &batches[j], per_dim)?;
            pairs += 1;
        }
    }
    Ok(total / pairs as Scalar)
}

/// MMD for several partitions of the same latents.
pub fn mmd_partition_report(
    latents: &LatentBatch,
    labels: &[usize],
    confounders: &[usize],
    envs: &[usize],
    partitions: &[Partition],
    per_dim: bool,
) -> Result<Vec<(Partition, Scalar)>> {
    partitions
        .iter()
        .map(|&p| {
            let keys = match p {
                Partition::ByLabel => labels,
                Partition::ByConfounder => confounders,
                Partition::ByEnv => envs,
            };
            Ok((p, mmd_partition(latents, keys, per_dim)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumerated_report() {
        let r = accuracy_report(&[1, 1, 0, 1], &[1, 1, 1, 1], &[0, 0, 0, 1], 2).unwrap();
        assert_eq!(r.aa, 0.75);
        assert_eq!(r.group_acc, vec![Some(2.0 / 3.0), Some(1.0)]);
        assert_eq!(r.wga, 2.0 / 3.0);
        let r = accuracy_report(&[0, 1], &[0, 1], &[0, 3], 4).unwrap();
        assert_eq!((r.aa, r.wga), (1.0, 1.0));
        assert_eq!(r.group_acc[1], None);
        assert!(matches!(
            accuracy_report(&[], &[], &[], 2),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn mmd_unit_gap() {
        let a = LatentBatch::new(3, vec![0.0, 0.0, 0.0, 2.0, 0.0, 0.0]).unwrap();
        let b = LatentBatch::new(3, vec![2.0, 0.0, 0.0, 2.0, 0.0, 0.0]).unwrap();
        assert_eq!(linear_mmd(&a, &b, false).unwrap(), 1.0);
        assert_eq!(linear_mmd(&a, &b, true).unwrap(), 1.0 / 3.0);
        assert_eq!(linear_mmd(&a, &a, true).unwrap(), 0.0);
        let empty = LatentBatch::new(3, vec![]).unwrap();
        assert!(linear_mmd(&a, &empty, true).is_err());
    }

    #[test]
    fn partitions() {
        let z = LatentBatch::new(1, vec![0.0, 0.0, 1.0, 1.0, 3.0]).unwrap();
        assert!((mmd_partition(&z, &[0, 0, 1, 1, 1], false).unwrap() - 25.0 / 9.0).abs() < 1e-12);
        // three parts: means 0, 1, 3
        let m = mmd_partition(&z, &[0, 0, 1, 1, 2], false).unwrap();
        assert!((m - (1.0 + 9.0 + 4.0) / 3.0).abs() < 1e-12);
        assert!(mmd_partition(&z, &[1; 5], false).is_err());
        assert!("by-color"
            .parse::<Partition>()
            .unwrap_err()
            .to_string()
            .contains("by-confounder"));
    }
}
