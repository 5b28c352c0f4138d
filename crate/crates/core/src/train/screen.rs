//! Similarity-function screening: every kind under both samplers.

use super::{fit, Algorithm, Splits, TrainConfig};
use crate::data::{Dataset, SamplingKind};
use crate::error::Result;
use crate::similarity::{Similarity, SimilarityKind};
use crate::Scalar;

pub const SAMPLINGS: [SamplingKind; 2] = [SamplingKind::Random, SamplingKind::UniformGroup];

#[derive(Debug, Clone)]
pub struct ScreenDataset {
    pub name: String,
    pub train: Dataset,
    pub val: Dataset,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScreenJob {
    pub kind: SimilarityKind,
    pub sampling: SamplingKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScreenRow {
    pub dataset: String,
    pub kind: SimilarityKind,
    pub sampling: SamplingKind,
    pub train_wga: Scalar,
    pub val_wga: Scalar,
}

/// The 22 configurations in table order: kinds in canonical order, random
/// before uniform-group.
pub fn screen_jobs() -> Vec<ScreenJob> {
    SimilarityKind::ALL
        .iter()
        .flat_map(|&kind| {
            SAMPLINGS
                .iter()
                .map(move |&sampling| ScreenJob { kind, sampling })
        })
        .collect()
}

/// Train one eX2L configuration and report the selected checkpoint's WGA on
/// the training and validation splits.
pub fn run_screen_job(
    base: &TrainConfig,
    data: &ScreenDataset,
    job: ScreenJob,
) -> Result<ScreenRow> {
    let cfg = TrainConfig {
        algorithm: Algorithm::Ex2l,
        similarity: Similarity {
            kind: job.kind,
            ..base.similarity
        },
        sampling: job.sampling,
        ..base.clone()
    };
    let out = fit(
        cfg,
        Splits {
            train: &data.train,
            val: &data.val,
            test: None,
        },
        &mut |_| {},
    )?;
    Ok(ScreenRow {
        dataset: data.name.clone(),
        kind: job.kind,
        sampling: job.sampling,
        train_wga: out.train_eval.report.wga,
        val_wga: out.val_eval.report.wga,
    })
}

/// Every job on every dataset, sequentially, rows grouped by dataset.
pub fn screening_harness(base: &TrainConfig, datasets: &[ScreenDataset]) -> Result<Vec<ScreenRow>> {
    let mut rows = Vec::new();
    for d in datasets {
        for job in screen_jobs() {
            rows.push(run_screen_job(base, d, job)?);
        }
    }
    Ok(rows)
}

/// Row indices sorted by validation WGA, best first; ties keep table order.
pub fn rank_rows(val_wga: &[Scalar]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..val_wga.len()).collect();
    idx.sort_by(|&a, &b| val_wga[b].total_cmp(&val_wga[a]));
    idx
}

/// The first `n` distinct kinds in ranked order.
pub fn top_kinds(ranked: &[SimilarityKind], n: usize) -> Vec<SimilarityKind> {
    let mut out = Vec::new();
    for &k in ranked {
        if !out.contains(&k) {
            out.push(k);
            if out.len() == n {
                break;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twenty_two_jobs() {
        let jobs = screen_jobs();
        assert_eq!(jobs.len(), 22);
        assert_eq!(jobs[1].sampling, SamplingKind::UniformGroup);
        assert_eq!(jobs[21].kind, SimilarityKind::SoftDice);
    }

    #[test]
    fn ranking_and_top_kinds() {
        let r = rank_rows(&[0.2, 0.9, 0.9, 0.1]);
        assert_eq!(r, vec![1, 2, 0, 3]);
        use SimilarityKind::*;
        assert_eq!(
            top_kinds(&[NegMae, NegMae, Ssim, Cosine, Ncc], 3),
            vec![NegMae, Ssim, Cosine]
        );
    }
}
