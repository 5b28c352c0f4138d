//! The epoch loop: sampling, validation, checkpoint selection, early stopping.

use std::time::Instant;

use super::{Algorithm, EarlyStopping, StopDecision, TrainConfig, Trainer};
use crate::autodiff::Graph;
use crate::data::{Dataset, Sampler};
use crate::error::{Error, Result};
use crate::loss;
use crate::metrics::{accuracy_report, mmd_partition, AccuracyReport, LatentBatch};
use crate::nn::Network;
use crate::tensor::NdArray;
use crate::Scalar;

/// Predictions, loss and latents of a network over a whole split.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub preds: Vec<usize>,
    pub mean_loss: Scalar,
    pub latents: LatentBatch,
    pub report: AccuracyReport,
}

/// Label-model evaluation in fixed-order chunks of `eval_batch`.
pub fn evaluate(net: &Network, data: &Dataset, eval_batch: usize) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::usage("evaluation of an empty split"));
    }
    let mut preds = Vec::with_capacity(data.len());
    let mut latent = Vec::with_capacity(data.len() * net.latent_dim());
    let mut loss_sum = 0.0;
    for batch in data.chunks(eval_batch) {
        let mut g = Graph::new();
        let t = net.forward(&mut g, &batch.images)?;
        let l = loss::per_sample(&mut g, t.logits, net.head(), &batch.labels)?;
        loss_sum += g.value(l).sum();
        preds.extend(net.head().predict(g.value(t.logits)));
        latent.extend_from_slice(g.value(t.latent).data());
    }
    let report = accuracy_report(&preds, data.labels(), &data.groups(), data.n_groups())?;
    Ok(Evaluation {
        preds,
        mean_loss: loss_sum / data.len() as Scalar,
        latents: LatentBatch::new(net.latent_dim(), latent)?,
        report,
    })
}

/// Linear MMD of label-model latents split by label, by confounder (both on
/// the test split) and by environment (validation and test pooled, since the
/// test split holds a single environment). `None` where a partition has fewer
/// than two parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmdValues {
    pub y: Option<Scalar>,
    pub c: Option<Scalar>,
    pub env: Option<Scalar>,
}

impl MmdValues {
    pub fn compute(
        val: (&Dataset, &Evaluation),
        test: (&Dataset, &Evaluation),
        per_dim: bool,
    ) -> Self {
        let (vd, ve) = val;
        let (td, te) = test;
        let mut pooled = ve.latents.clone();
        pooled.data.extend_from_slice(&te.latents.data);
        let envs: Vec<usize> = vd.envs().iter().chain(td.envs()).copied().collect();
        MmdValues {
            y: mmd_partition(&te.latents, td.labels(), per_dim).ok(),
            c: mmd_partition(&te.latents, td.confounders(), per_dim).ok(),
            env: mmd_partition(&pooled, &envs, per_dim).ok(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Splits<'a> {
    pub train: &'a Dataset,
    pub val: &'a Dataset,
    pub test: Option<&'a Dataset>,
}

#[derive(Debug, Clone)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Wall clock of the training steps only.
    pub seconds: f64,
    pub train_loss: Scalar,
    pub val: AccuracyReport,
    pub val_loss: Scalar,
    pub test: Option<AccuracyReport>,
    pub test_loss: Option<Scalar>,
    pub mmd: Option<MmdValues>,
}

/// Parameters of the selected epoch.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub epoch: usize,
    pub algorithm: Algorithm,
    pub label: Vec<NdArray>,
    pub conf: Option<Vec<NdArray>>,
    pub val_aa: Scalar,
    pub val_wga: Scalar,
}

impl Checkpoint {
    pub fn score(&self) -> Scalar {
        (self.val_aa + self.val_wga) / 2.0
    }
}

#[derive(Debug)]
pub struct FitResult {
    /// Holds the selected checkpoint's parameters.
    pub trainer: Trainer,
    pub records: Vec<EpochRecord>,
    pub best: Checkpoint,
    pub stopped_early: bool,
    /// Selected model on each split.
    pub train_eval: Evaluation,
    pub val_eval: Evaluation,
    pub test_eval: Option<Evaluation>,
    pub mmd: Option<MmdValues>,
}

/// Train from freshly initialized networks. `on_epoch` sees each record as
/// soon as it is complete.
pub fn fit(
    cfg: TrainConfig,
    splits: Splits<'_>,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<FitResult> {
    let coding = splits.train.coding();
    if cfg.algorithm == Algorithm::Ex2l && coding.n_confounders < 2 {
        return Err(Error::config(
            "ex2l needs at least two confounder values in the training data",
        ));
    }
    if splits.val.coding() != coding || splits.test.is_some_and(|t| t.coding() != coding) {
        return Err(Error::config(
            "train, validation and test splits use different group codings",
        ));
    }
    let trainer = Trainer::new(cfg, splits.train.image_shape(), coding)?;
    fit_trainer(trainer, splits, on_epoch)
}

/// Train an already constructed trainer.
pub fn fit_trainer(
    mut trainer: Trainer,
    splits: Splits<'_>,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<FitResult> {
    let cfg = trainer.config().clone();
    let mut sampler = Sampler::new(cfg.sampling, splits.train, cfg.batch_size, cfg.seed)?;
    let mut stopper = EarlyStopping::new(cfg.patience, cfg.min_delta);
    let mut records = Vec::new();
    let mut best: Option<Checkpoint> = None;
    let mut stopped_early = false;
    for epoch in 1..=cfg.max_epochs {
        let start = Instant::now();
        let mut loss_sum = 0.0;
        let n_batches = sampler.batches_per_epoch();
        for _ in 0..n_batches {
            let batch = splits.train.batch(&sampler.next_batch());
            loss_sum += trainer.step(&batch)?.total;
        }
        let seconds = start.elapsed().as_secs_f64();

        let val = evaluate(trainer.label_net(), splits.val, cfg.eval_batch)?;
        let test = splits
            .test
            .map(|t| evaluate(trainer.label_net(), t, cfg.eval_batch))
            .transpose()?;
        let mmd = splits
            .test
            .zip(test.as_ref())
            .map(|(td, te)| MmdValues::compute((splits.val, &val), (td, te), true));
        let score = val.report.selection_score();
        if best.as_ref().is_none_or(|b| score > b.score()) {
            let (label, conf) = trainer.snapshot();
            best = Some(Checkpoint {
                epoch,
                algorithm: cfg.algorithm,
                label,
                conf,
                val_aa: val.report.aa,
                val_wga: val.report.wga,
            });
        }
        let record = EpochRecord {
            epoch,
            seconds,
            train_loss: loss_sum / n_batches as Scalar,
            val_loss: val.mean_loss,
            val: val.report,
            test_loss: test.as_ref().map(|t| t.mean_loss),
            test: test.map(|t| t.report),
            mmd,
        };
        on_epoch(&record);
        records.push(record);
        if stopper.update(score) == StopDecision::Stop {
            stopped_early = epoch < cfg.max_epochs;
            break;
        }
    }
    let best = best.expect("at least one epoch ran");
    trainer.restore(&best.label, best.conf.as_deref())?;
    let net = trainer.label_net();
    let train_eval = evaluate(net, splits.train, cfg.eval_batch)?;
    let val_eval = evaluate(net, splits.val, cfg.eval_batch)?;
    let test_eval = splits
        .test
        .map(|t| evaluate(net, t, cfg.eval_batch))
        .transpose()?;
    let mmd = splits
        .test
        .zip(test_eval.as_ref())
        .map(|(td, te)| MmdValues::compute((splits.val, &val_eval), (td, te), true));
    Ok(FitResult {
        trainer,
        records,
        best,
        stopped_early,
        train_eval,
        val_eval,
        test_eval,
        mmd,
    })
}
