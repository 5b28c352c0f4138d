//! Training loops: ERM, GroupDRO and explanation-regularized training.
//!
//! A [`Trainer`] owns the label network (and, for eX2L, the confounder
//! network) and performs one SGD step per call to [`Trainer::step`].
//! [`fit`] runs epochs, evaluates on validation data, keeps the checkpoint with
//! the best `(AA + WGA) / 2` and stops early when the score stalls.

mod early_stop;
mod fit;
mod groupdro;
mod screen;
mod search;

pub use early_stop::{EarlyStopping, StopDecision};
pub use fit::{
    evaluate, fit, fit_trainer, Checkpoint, EpochRecord, Evaluation, FitResult, MmdValues, Splits,
};
pub use groupdro::GroupWeights;
pub use screen::{
    rank_rows, run_screen_job, screen_jobs, screening_harness, top_kinds, ScreenDataset, ScreenJob,
    ScreenRow, SAMPLINGS,
};
pub use search::{
    best_trial, lambdas_in_search_range, random_search, run_trial, Draw, SearchSpace, Trial,
    TrialResult,
};

use std::fmt;
use std::str::FromStr;

use crate::autodiff::{Graph, NodeId};
use crate::data::{Batch, GroupCoding, SamplingKind};
use crate::error::{Error, Result};
use crate::gradcam;
use crate::loss;
use crate::nn::{HeadKind, Network};
use crate::rng::{self, Stream};
use crate::similarity::{Similarity, SimilarityKind};
use crate::tensor::NdArray;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Erm,
    GroupDro,
    Ex2l,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Erm, Algorithm::GroupDro, Algorithm::Ex2l];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Erm => "erm",
            Algorithm::GroupDro => "groupdro",
            Algorithm::Ex2l => "ex2l",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                Error::usage(format!(
                    "unknown algorithm '{s}', expected erm, groupdro or ex2l"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub similarity: Similarity,
    pub sampling: SamplingKind,
    pub lambda_c: Scalar,
    pub lambda_sim: Scalar,
    pub groupdro_eta: Scalar,
    pub lr_label: Scalar,
    pub lr_conf: Scalar,
    pub wd_label: Scalar,
    pub wd_conf: Scalar,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub min_delta: Scalar,
    pub seed: u64,
    /// Batch size used for evaluation passes; does not affect results.
    pub eval_batch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            algorithm: Algorithm::Erm,
            similarity: Similarity::new(SimilarityKind::NegMae),
            sampling: SamplingKind::Random,
            lambda_c: 1.0,
            lambda_sim: 1.0,
            groupdro_eta: 0.01,
            lr_label: 0.05,
            lr_conf: 0.05,
            wd_label: 0.0,
            wd_conf: 0.0,
            batch_size: 128,
            max_epochs: 20,
            patience: 10,
            min_delta: 1e-3,
            seed: 42,
            eval_batch: 500,
        }
    }
}

impl TrainConfig {
    /// Every violated constraint, not just the first.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let mut check = |ok: bool, msg: String| {
            if !ok {
                errs.push(msg);
            }
        };
        let finite_nonneg = |v: Scalar| v.is_finite() && v >= 0.0;
        check(
            finite_nonneg(self.lambda_c),
            format!("lambda_c must be >= 0, got {}", self.lambda_c),
        );
        check(
            finite_nonneg(self.lambda_sim),
            format!("lambda_sim must be >= 0, got {}", self.lambda_sim),
        );
        check(
            self.groupdro_eta.is_finite() && self.groupdro_eta > 0.0,
            format!("groupdro_eta must be > 0, got {}", self.groupdro_eta),
        );
        check(
            self.lr_label.is_finite() && self.lr_label > 0.0,
            format!("lr_label must be > 0, got {}", self.lr_label),
        );
        check(
            self.lr_conf.is_finite() && self.lr_conf > 0.0,
            format!("lr_conf must be > 0, got {}", self.lr_conf),
        );
        check(
            finite_nonneg(self.wd_label),
            format!("wd_label must be >= 0, got {}", self.wd_label),
        );
        check(
            finite_nonneg(self.wd_conf),
            format!("wd_conf must be >= 0, got {}", self.wd_conf),
        );
        check(self.batch_size >= 1, "batch_size must be >= 1".into());
        check(self.max_epochs >= 1, "max_epochs must be >= 1".into());
        check(self.patience >= 1, "patience must be >= 1".into());
        check(
            finite_nonneg(self.min_delta),
            format!("min_delta must be >= 0, got {}", self.min_delta),
        );
        check(self.eval_batch >= 1, "eval_batch must be >= 1".into());
        check(
            self.similarity.eps.is_finite() && self.similarity.eps > 0.0,
            format!(
                "similarity epsilon must be > 0, got {}",
                self.similarity.eps
            ),
        );
        let s = self.similarity.ssim;
        check(
            s.k1 > 0.0 && s.k2 > 0.0 && s.alpha > 0.0 && s.beta > 0.0 && s.gamma > 0.0,
            "ssim constants and exponents must be > 0".into(),
        );
        errs
    }
}

/// Loss values of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub loss_y: Scalar,
    pub loss_c: Option<Scalar>,
    pub sim: Option<Scalar>,
    pub total: Scalar,
}

/// Nodes of the training objective on one graph.
#[derive(Debug, Clone, Copy)]
pub struct Objective {
    pub total: NodeId,
    /// Per-sample label loss, `[B]`.
    pub per_sample_y: NodeId,
    pub loss_y: NodeId,
    pub loss_c: Option<NodeId>,
    pub sim: Option<NodeId>,
}

#[derive(Debug)]
pub struct Trainer {
    cfg: TrainConfig,
    coding: GroupCoding,
    label: Network,
    conf: Option<Network>,
    dro: Option<GroupWeights>,
}

impl Trainer {
    /// Fresh default CNNs. The label network draws from the label-init
    /// stream and the confounder network from its own, so the label network
    /// starts identically whichever algorithm is chosen.
    pub fn new(cfg: TrainConfig, input_shape: [usize; 3], coding: GroupCoding) -> Result<Self> {
        let errs = cfg.validate();
        if !errs.is_empty() {
            return Err(Error::config(errs.join("; ")));
        }
        let label = Network::default_cnn(
            input_shape,
            HeadKind::for_classes(coding.n_labels),
            &mut rng::stream(cfg.seed, Stream::LabelInit),
        )?;
        let conf = match cfg.algorithm {
            Algorithm::Ex2l => Some(Network::default_cnn(
                input_shape,
                HeadKind::for_classes(coding.n_confounders),
                &mut rng::stream(cfg.seed, Stream::ConfounderInit),
            )?),
            _ => None,
        };
        Self::with_networks(cfg, coding, label, conf)
    }

    pub fn with_networks(
        cfg: TrainConfig,
        coding: GroupCoding,
        label: Network,
        conf: Option<Network>,
    ) -> Result<Self> {
        if cfg.algorithm == Algorithm::Ex2l {
            let Some(c) = &conf else {
                return Err(Error::config("ex2l needs a confounder network"));
            };
            if c.layer_output_shape(c.capture_layer())
                != label.layer_output_shape(label.capture_layer())
            {
                return Err(Error::config(
                    "label and confounder capture layers differ in shape",
                ));
            }
        }
        let dro = (cfg.algorithm == Algorithm::GroupDro)
            .then(|| GroupWeights::uniform(coding.n_groups()));
        Ok(Trainer {
            cfg,
            coding,
            label,
            conf,
            dro,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn coding(&self) -> GroupCoding {
        self.coding
    }

    pub fn label_net(&self) -> &Network {
        &self.label
    }

    pub fn conf_net(&self) -> Option<&Network> {
        self.conf.as_ref()
    }

    pub fn group_weights(&self) -> Option<&GroupWeights> {
        self.dro.as_ref()
    }

    /// Build the training objective for a batch without updating anything.
    /// GroupDRO uses its current group weights.
    pub fn objective(&self, g: &mut Graph, batch: &Batch) -> Result<Objective> {
        let mut obj = self.base_objective(g, batch)?;
        if let Some(dro) = &self.dro {
            obj.total = dro.weighted_loss(g, obj.per_sample_y, &batch.groups)?;
        }
        Ok(obj)
    }

    fn base_objective(&self, g: &mut Graph, batch: &Batch) -> Result<Objective> {
        let head = self.label.head();
        let ty = self.label.forward(g, &batch.images)?;
        let per_sample_y = loss::per_sample(g, ty.logits, head, &batch.labels)?;
        let loss_y = g.mean_all(per_sample_y);
        let Some(conf) = &self.conf else {
            return Ok(Objective {
                total: loss_y,
                per_sample_y,
                loss_y,
                loss_c: None,
                sim: None,
            });
        };
        let tc = conf.forward(g, &batch.images)?;
        let loss_c = loss::mean(g, tc.logits, conf.head(), &batch.confounders)?;
        let cam_y = gradcam::compute(g, &ty, &batch.labels, head)?;
        let cam_c = gradcam::compute(g, &tc, &batch.confounders, conf.head())?;
        let sim = self
            .cfg
            .similarity
            .evaluate(g, cam_y.heatmap.node, cam_c.heatmap.node)?;
        let wc = g.mul_scalar(loss_c, self.cfg.lambda_c);
        let ws = g.mul_scalar(sim, self.cfg.lambda_sim);
        let task = g.add(loss_y, wc);
        let total = g.add(task, ws);
        Ok(Objective {
            total,
            per_sample_y,
            loss_y,
            loss_c: Some(loss_c),
            sim: Some(sim),
        })
    }

    /// One SGD step on a batch.
    pub fn step(&mut self, batch: &Batch) -> Result<StepStats> {
        let mut g = Graph::new();
        let mut obj = self.base_objective(&mut g, batch)?;
        if let Some(dro) = &mut self.dro {
            dro.update(
                g.value(obj.per_sample_y).data(),
                &batch.groups,
                self.cfg.groupdro_eta,
            )?;
            obj.total = dro.weighted_loss(&mut g, obj.per_sample_y, &batch.groups)?;
        }
        let total = g.value(obj.total).item()?;
        if !total.is_finite() {
            return Err(Error::Invariant(format!("training loss became {total}")));
        }
        g.backward(obj.total)?;
        self.label.sgd_step(self.cfg.lr_label, self.cfg.wd_label);
        if let Some(conf) = &self.conf {
            conf.sgd_step(self.cfg.lr_conf, self.cfg.wd_conf);
        }
        let item = |n: NodeId| g.value(n).item();
        Ok(StepStats {
            loss_y: item(obj.loss_y)?,
            loss_c: obj.loss_c.map(item).transpose()?,
            sim: obj.sim.map(item).transpose()?,
            total,
        })
    }

    pub(crate) fn snapshot(&self) -> (Vec<NdArray>, Option<Vec<NdArray>>) {
        (
            self.label.snapshot(),
            self.conf.as_ref().map(Network::snapshot),
        )
    }

    pub(crate) fn restore(&self, label: &[NdArray], conf: Option<&[NdArray]>) -> Result<()> {
        self.label.load_snapshot(label)?;
        if let (Some(net), Some(values)) = (&self.conf, conf) {
            net.load_snapshot(values)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algorithm_names() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("irm".parse::<Algorithm>().is_err());
    }

    #[test]
    fn validation_lists_everything() {
        let cfg = TrainConfig {
            lambda_c: -1.0,
            lr_label: 0.0,
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert_eq!(cfg.validate().len(), 3);
        assert!(TrainConfig::default().validate().is_empty());
    }
}
