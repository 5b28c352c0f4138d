//! CSV tables and the run manifest.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::metrics::AccuracyReport;
use crate::train::{Algorithm, EpochRecord, FitResult, MmdValues, TrainConfig};
use crate::Scalar;

fn opt(v: Option<Scalar>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Rows of `metrics.csv` for one run.
///
/// Every epoch contributes a `val` row and, when a test split exists, a
/// `test` row carrying the MMD values. The selected checkpoint adds
/// `best-train`, `best-val` and `best-test` rows under its epoch number.
/// MMD by label and confounder use test latents; by environment pools
/// validation and test latents.
pub struct MetricsTable {
    n_groups: usize,
    rows: Vec<Vec<String>>,
}

impl MetricsTable {
    pub fn new(n_groups: usize) -> Self {
        MetricsTable {
            n_groups,
            rows: Vec::new(),
        }
    }

    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = [
            "epoch",
            "split",
            "algorithm",
            "similarity",
            "sampling",
            "AA",
            "WGA",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        h.extend((0..self.n_groups).map(|g| format!("g{g}")));
        h.extend(
            ["mmd_y", "mmd_c", "mmd_env", "loss", "seed"]
                .iter()
                .map(|s| s.to_string()),
        );
        h
    }

    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        cfg: &TrainConfig,
        epoch: usize,
        split: &str,
        r: &AccuracyReport,
        mmd: Option<MmdValues>,
        loss: Scalar,
    ) {
        let sim = match cfg.algorithm {
            Algorithm::Ex2l => cfg.similarity.kind.to_string(),
            _ => "none".into(),
        };
        let mut row = vec![
            epoch.to_string(),
            split.to_string(),
            cfg.algorithm.to_string(),
            sim,
            cfg.sampling.to_string(),
            r.aa.to_string(),
            r.wga.to_string(),
        ];
        row.extend(r.group_acc.iter().map(|a| opt(*a)));
        row.extend([
            opt(mmd.and_then(|m| m.y)),
            opt(mmd.and_then(|m| m.c)),
            opt(mmd.and_then(|m| m.env)),
        ]);
        row.push(loss.to_string());
        row.push(cfg.seed.to_string());
        self.rows.push(row);
    }

    pub fn push_epoch(&mut self, cfg: &TrainConfig, rec: &EpochRecord) {
        self.push(cfg, rec.epoch, "val", &rec.val, None, rec.val_loss);
        if let (Some(t), Some(l)) = (&rec.test, rec.test_loss) {
            self.push(cfg, rec.epoch, "test", t, rec.mmd, l);
        }
    }

    pub fn push_selected(&mut self, cfg: &TrainConfig, fit: &FitResult) {
        let e = fit.best.epoch;
        self.push(
            cfg,
            e,
            "best-train",
            &fit.train_eval.report,
            None,
            fit.train_eval.mean_loss,
        );
        self.push(
            cfg,
            e,
            "best-val",
            &fit.val_eval.report,
            None,
            fit.val_eval.mean_loss,
        );
        if let Some(t) = &fit.test_eval {
            self.push(cfg, e, "best-test", &t.report, fit.mmd, t.mean_loss);
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_csv(path, &self.header(), &self.rows)
    }
}

pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(v: &[Scalar]) -> (Scalar, Scalar) {
    let n = v.len() as Scalar;
    let mean = v.iter().sum::<Scalar>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<Scalar>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Plain-text manifest: `#` metadata lines followed by the resolved config,
/// so the file itself can be passed back as a config to replay the run.
pub struct Manifest {
    pub command: String,
    pub config_text: String,
    pub config_hash: String,
    pub started: String,
    pub finished: String,
    /// `(label, seconds per epoch)` per run.
    pub epoch_seconds: Vec<(String, Vec<f64>)>,
}

impl Manifest {
    pub fn render(&self) -> String {
        let mut s = String::from("# ex2l run manifest\n");
        s.push_str(&format!("# command = {}\n", self.command));
        s.push_str(&format!("# config_sha256 = {}\n", self.config_hash));
        s.push_str(&format!("# started = {}\n", self.started));
        s.push_str(&format!("# finished = {}\n", self.finished));
        for (label, secs) in &self.epoch_seconds {
            let v: Vec<String> = secs.iter().map(|x| format!("{x:.3}")).collect();
            s.push_str(&format!("# epoch_seconds {label} = {}\n", v.join(",")));
        }
        s.push('\n');
        s.push_str(&self.config_text);
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(self.render().as_bytes())?;
        Ok(())
    }
}

pub fn now() -> String {
    chrono::Local::now().to_rfc3339()
}
