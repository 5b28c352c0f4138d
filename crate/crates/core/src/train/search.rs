//! Randomized hyperparameter search.

use rand::Rng as _;

use super::{fit, Algorithm, Splits, TrainConfig};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};
use crate::Scalar;

/// A field is either fixed or drawn as `10^U(lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Draw {
    Fixed(Scalar),
    LogUniform(Scalar, Scalar),
}

impl Draw {
    fn sample(self, rng: &mut rng::Rng) -> Scalar {
        match self {
            Draw::Fixed(v) => v,
            Draw::LogUniform(lo, hi) if lo == hi => (10.0 as Scalar).powf(lo),
            Draw::LogUniform(lo, hi) => (10.0 as Scalar).powf(rng.gen_range(lo..hi)),
        }
    }
}

/// Distributions per tunable field. Fields irrelevant to the algorithm are
/// still drawn so that a trial's config does not depend on the algorithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchSpace {
    pub lr_label: Draw,
    pub lr_conf: Draw,
    pub wd_label: Draw,
    pub wd_conf: Draw,
    pub lambda_c: Draw,
    pub lambda_sim: Draw,
    pub groupdro_eta: Draw,
}

impl SearchSpace {
    /// The published MNIST ranges. Learning rates this small need far more
    /// epochs than a desk run affords.
    pub fn published_mnist() -> Self {
        SearchSpace {
            lr_label: Draw::LogUniform(-5.0, -3.5),
            lr_conf: Draw::LogUniform(-5.0, -3.5),
            wd_label: Draw::LogUniform(-6.0, -2.0),
            wd_conf: Draw::LogUniform(-6.0, -2.0),
            lambda_c: Draw::LogUniform(-1.0, 2.0),
            lambda_sim: Draw::LogUniform(-1.0, 2.0),
            groupdro_eta: Draw::LogUniform(-1.0, 1.0),
        }
    }

    /// Same λ and η ranges, learning rates scaled for short runs of the small CNN.
    pub fn desk() -> Self {
        SearchSpace {
            lr_label: Draw::LogUniform(-2.0, -0.7),
            lr_conf: Draw::LogUniform(-2.0, -0.7),
            wd_label: Draw::Fixed(0.0),
            wd_conf: Draw::Fixed(0.0),
            ..Self::published_mnist()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "published-mnist" => Ok(Self::published_mnist()),
            _ => Err(Error::usage(format!(
                "unknown search space '{name}', expected desk or published-mnist"
            ))),
        }
    }

    /// `n` configs derived from `base`. Draws come from the search stream of
    /// `seed` in trial order; the training seed stays `base.seed`.
    pub fn draw_trials(&self, base: &TrainConfig, n: usize, seed: u64) -> Vec<Trial> {
        let mut rng = rng::stream(seed, Stream::Search);
        (0..n)
            .map(|index| {
                let mut config = base.clone();
                config.lr_label = self.lr_label.sample(&mut rng);
                config.lr_conf = self.lr_conf.sample(&mut rng);
                config.wd_label = self.wd_label.sample(&mut rng);
                config.wd_conf = self.wd_conf.sample(&mut rng);
                config.lambda_c = self.lambda_c.sample(&mut rng);
                config.lambda_sim = self.lambda_sim.sample(&mut rng);
                config.groupdro_eta = self.groupdro_eta.sample(&mut rng);
                Trial { index, config }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub index: usize,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: Trial,
    pub best_epoch: usize,
    pub val_aa: Scalar,
    pub val_wga: Scalar,
}

impl TrialResult {
    pub fn score(&self) -> Scalar {
        (self.val_aa + self.val_wga) / 2.0
    }
}

pub fn run_trial(trial: &Trial, splits: Splits<'_>) -> Result<TrialResult> {
    let out = fit(trial.config.clone(), splits, &mut |_| {})?;
    Ok(TrialResult {
        trial: trial.clone(),
        best_epoch: out.best.epoch,
        val_aa: out.best.val_aa,
        val_wga: out.best.val_wga,
    })
}

/// Index of the highest validation score; the earliest trial wins ties.
pub fn best_trial(results: &[TrialResult]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in results.iter().enumerate() {
        if best.is_none_or(|b| r.score() > results[b].score()) {
            best = Some(i);
        }
    }
    best
}

/// Draw `trials` configs, train each in turn and return all results with the
/// index of the best.
pub fn random_search(
    base: &TrainConfig,
    space: &SearchSpace,
    trials: usize,
    seed: u64,
    splits: Splits<'_>,
) -> Result<(Vec<TrialResult>, usize)> {
    if trials == 0 {
        return Err(Error::config("random search needs at least one trial"));
    }
    let results = space
        .draw_trials(base, trials, seed)
        .iter()
        .map(|t| run_trial(t, splits))
        .collect::<Result<Vec<_>>>()?;
    let best = best_trial(&results).expect("non-empty");
    Ok((results, best))
}

/// Whether the λ fields of a config lie in the searched interval `[0.1, 100]`.
pub fn lambdas_in_search_range(cfg: &TrainConfig) -> bool {
    let ok = |v: Scalar| (0.1..=100.0).contains(&v);
    cfg.algorithm != Algorithm::Ex2l || (ok(cfg.lambda_c) && ok(cfg.lambda_sim))
}
