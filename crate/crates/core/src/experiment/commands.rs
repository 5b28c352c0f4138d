//! The `ex2l` commands. Each takes a resolved config, writes its files under
//! `out_dir` and returns what it wrote in structured form.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use super::config::ExperimentConfig;
use super::data::{build_splits, SplitData};
use super::output::{mean_std, now, strings, write_csv, Manifest, MetricsTable};
use crate::autodiff::Graph;
use crate::checkpoint::SavedModel;
use crate::data::{Dataset, Sampler};
use crate::error::{Error, Result};
use crate::gradcam;
use crate::metrics::{mmd_partition, AccuracyReport, Partition};
use crate::train::{
    best_trial, evaluate, fit, rank_rows, run_screen_job, run_trial, screen_jobs, top_kinds,
    Algorithm, MmdValues, ScreenDataset, ScreenRow, SearchSpace, Splits, TrainConfig, Trainer,
    Trial, TrialResult,
};
use crate::Scalar;

/// How independent screening and search trials are run.
#[derive(Debug, Clone)]
pub enum Workers {
    InProcess,
    /// Up to `n` child processes of `exe`, each running one trial through
    /// the hidden worker command.
    Processes {
        exe: PathBuf,
        n: usize,
    },
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub seed: u64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub val: AccuracyReport,
    pub test: AccuracyReport,
    pub mmd: Option<MmdValues>,
    pub epoch_seconds: Vec<f64>,
}

fn finish_manifest(
    cfg: &ExperimentConfig,
    command: &str,
    started: String,
    epoch_seconds: Vec<(String, Vec<f64>)>,
) -> Result<()> {
    Manifest {
        command: command.into(),
        config_text: cfg.to_text(),
        config_hash: cfg.content_hash(),
        started,
        finished: now(),
        epoch_seconds,
    }
    .write(&cfg.out_dir.join("manifest.txt"))
}

fn checkpoint_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("checkpoint-seed{seed}.bin"))
}

/// Train the configured algorithm once per seed.
///
/// Writes `metrics.csv`, `runs.csv` (one row per seed), `summary.csv` (mean
/// and sample standard deviation over seeds), one checkpoint per seed,
/// `manifest.txt`, and heatmaps when `heatmaps > 0`.
pub fn train(cfg: &ExperimentConfig) -> Result<Vec<RunSummary>> {
    let started = now();
    fs::create_dir_all(&cfg.out_dir)?;
    let data = build_splits(&cfg.data)?;
    let mut table = MetricsTable::new(data.train.n_groups());
    let mut runs = Vec::new();
    for &seed in &cfg.seeds {
        let tc = TrainConfig {
            seed,
            ..cfg.train.clone()
        };
        let splits = Splits {
            train: &data.train,
            val: &data.val,
            test: Some(&data.test),
        };
        let out = fit(tc.clone(), splits, &mut |r| {
            let t = r.test.as_ref().expect("test split given");
            eprintln!(
                "[{} seed {seed}] epoch {} {:.1}s loss {:.4} val aa {:.3} wga {:.3} test aa {:.3} wga {:.3}",
                tc.algorithm, r.epoch, r.seconds, r.train_loss, r.val.aa, r.val.wga, t.aa, t.wga
            );
        })?;
        for r in &out.records {
            table.push_epoch(&tc, r);
        }
        table.push_selected(&tc, &out);
        let saved = SavedModel::from_trainer(
            &out.trainer,
            out.best.epoch,
            out.best.val_aa,
            out.best.val_wga,
        );
        saved.save(&checkpoint_path(&cfg.out_dir, seed))?;
        if cfg.heatmaps > 0 {
            let split = pick_split(&data, &cfg.heatmap_split)?;
            let dir = cfg.out_dir.join(format!("heatmaps-seed{seed}"));
            export_heatmaps(&saved, split, &cfg.heatmap_split, cfg.heatmaps, &dir)?;
        }
        runs.push(RunSummary {
            seed,
            best_epoch: out.best.epoch,
            epochs_run: out.records.len(),
            stopped_early: out.stopped_early,
            val: out.val_eval.report.clone(),
            test: out
                .test_eval
                .as_ref()
                .expect("test split given")
                .report
                .clone(),
            mmd: out.mmd,
            epoch_seconds: out.records.iter().map(|r| r.seconds).collect(),
        });
    }
    table.write(&cfg.out_dir.join("metrics.csv"))?;
    write_runs(cfg, &runs)?;
    let secs = runs
        .iter()
        .map(|r| (format!("seed{}", r.seed), r.epoch_seconds.clone()))
        .collect();
    finish_manifest(cfg, "train", started, secs)?;
    Ok(runs)
}

fn write_runs(cfg: &ExperimentConfig, runs: &[RunSummary]) -> Result<()> {
    let opt = |v: Option<Scalar>| v.map(|x| x.to_string()).unwrap_or_default();
    let rows: Vec<Vec<String>> = runs
        .iter()
        .map(|r| {
            vec![
                r.seed.to_string(),
                r.best_epoch.to_string(),
                r.epochs_run.to_string(),
                r.stopped_early.to_string(),
                r.val.aa.to_string(),
                r.val.wga.to_string(),
                r.test.aa.to_string(),
                r.test.wga.to_string(),
                opt(r.mmd.and_then(|m| m.y)),
                opt(r.mmd.and_then(|m| m.c)),
                opt(r.mmd.and_then(|m| m.env)),
            ]
        })
        .collect();
    let header = strings(&[
        "seed",
        "best_epoch",
        "epochs_run",
        "stopped_early",
        "val_aa",
        "val_wga",
        "test_aa",
        "test_wga",
        "mmd_y",
        "mmd_c",
        "mmd_env",
    ]);
    write_csv(&cfg.out_dir.join("runs.csv"), &header, &rows)?;

    let t = &cfg.train;
    let mut header = strings(&["algorithm", "similarity", "sampling", "n_seeds", "seeds"]);
    let mut row = vec![
        t.algorithm.to_string(),
        if t.algorithm == Algorithm::Ex2l {
            t.similarity.kind.to_string()
        } else {
            "none".into()
        },
        t.sampling.to_string(),
        runs.len().to_string(),
        runs.iter()
            .map(|r| r.seed.to_string())
            .collect::<Vec<_>>()
            .join(" "),
    ];
    type Column = (&'static str, fn(&RunSummary) -> Option<Scalar>);
    let columns: [Column; 7] = [
        ("test_aa", |r| Some(r.test.aa)),
        ("test_wga", |r| Some(r.test.wga)),
        ("val_aa", |r| Some(r.val.aa)),
        ("val_wga", |r| Some(r.val.wga)),
        ("mmd_y", |r| r.mmd.and_then(|m| m.y)),
        ("mmd_c", |r| r.mmd.and_then(|m| m.c)),
        ("mmd_env", |r| r.mmd.and_then(|m| m.env)),
    ];
    for (name, f) in columns {
        header.push(format!("{name}_mean"));
        header.push(format!("{name}_std"));
        let v: Option<Vec<Scalar>> = runs.iter().map(&f).collect();
        match v {
            Some(v) => {
                let (m, s) = mean_std(&v);
                row.push(m.to_string());
                row.push(s.to_string());
            }
            None => row.extend([String::new(), String::new()]),
        }
    }
    write_csv(&cfg.out_dir.join("summary.csv"), &header, &[row])
}

fn pick_split<'a>(data: &'a SplitData, name: &str) -> Result<&'a Dataset> {
    match name {
        "val" => Ok(&data.val),
        "test" => Ok(&data.test),
        _ => Err(Error::usage(format!("split '{name}' must be val or test"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapIndexRow {
    pub sample: usize,
    pub y: usize,
    pub y_hat: usize,
    pub c: usize,
    pub label_map: String,
    /// Empty when the checkpoint has no confounder model.
    pub conf_map: String,
}

/// Export label-model (and confounder-model) heatmaps of the first `n`
/// examples of `data` as PGM files, plus `index.csv`. Label maps target the
/// true label and confounder maps the true confounder.
pub fn export_heatmaps(
    model: &SavedModel,
    data: &Dataset,
    split: &str,
    n: usize,
    dir: &Path,
) -> Result<Vec<HeatmapIndexRow>> {
    if data.coding() != model.coding {
        return Err(Error::config(format!(
            "dataset groups {:?} do not match checkpoint {:?}",
            data.coding(),
            model.coding
        )));
    }
    let n = n.min(data.len());
    if n == 0 {
        return Err(Error::usage("no samples to export"));
    }
    fs::create_dir_all(dir)?;
    let idx: Vec<usize> = (0..n).collect();
    let batch = data.batch(&idx);
    let mut g = Graph::new();
    let head = model.label.head();
    let ty = model.label.forward(&mut g, &batch.images)?;
    let cam_y = gradcam::compute(&mut g, &ty, &batch.labels, head)?;
    let preds = head.predict(g.value(ty.logits));
    let cam_c = match &model.conf {
        Some(conf) => {
            let tc = conf.forward(&mut g, &batch.images)?;
            Some(gradcam::compute(
                &mut g,
                &tc,
                &batch.confounders,
                conf.head(),
            )?)
        }
        None => None,
    };
    let mut rows = Vec::with_capacity(n);
    for (i, &y_hat) in preds.iter().enumerate().take(n) {
        let label_map = gradcam::heatmap_file_name(split, i, "label");
        gradcam::export_heatmap(&cam_y.heatmap.export(&g, i), &dir.join(&label_map))?;
        let conf_map = match &cam_c {
            Some(c) => {
                let name = gradcam::heatmap_file_name(split, i, "confounder");
                gradcam::export_heatmap(&c.heatmap.export(&g, i), &dir.join(&name))?;
                name
            }
            None => String::new(),
        };
        rows.push(HeatmapIndexRow {
            sample: i,
            y: batch.labels[i],
            y_hat,
            c: batch.confounders[i],
            label_map,
            conf_map,
        });
    }
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.sample.to_string(),
                r.y.to_string(),
                r.y_hat.to_string(),
                r.c.to_string(),
                r.label_map.clone(),
                r.conf_map.clone(),
            ]
        })
        .collect();
    let header = strings(&[
        "sample",
        "y",
        "y_hat",
        "c",
        "label_map_path",
        "conf_map_path",
    ]);
    write_csv(&dir.join("index.csv"), &header, &table)?;
    Ok(rows)
}

fn single_checkpoint(cfg: &ExperimentConfig) -> Result<&Path> {
    match cfg.checkpoint.as_slice() {
        [p] => Ok(p),
        [] => Err(Error::usage("no checkpoint given, use --checkpoint PATH")),
        _ => Err(Error::usage("gradcam takes exactly one checkpoint")),
    }
}

/// Heatmaps of `heatmaps` samples of the `heatmap_split` split from one
/// checkpoint, written to `out_dir`.
pub fn gradcam(cfg: &ExperimentConfig) -> Result<Vec<HeatmapIndexRow>> {
    let started = now();
    let model = SavedModel::load(single_checkpoint(cfg)?)?;
    if cfg.heatmaps == 0 {
        return Err(Error::usage(
            "set --heatmaps N to the number of samples to export",
        ));
    }
    let data = build_splits(&cfg.data)?;
    let rows = export_heatmaps(
        &model,
        pick_split(&data, &cfg.heatmap_split)?,
        &cfg.heatmap_split,
        cfg.heatmaps,
        &cfg.out_dir,
    )?;
    finish_manifest(cfg, "gradcam", started, Vec::new())?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmdRow {
    pub checkpoint: String,
    pub algorithm: Algorithm,
    pub partition: Partition,
    /// Which latents were used: `test`, or `val+test` for environments.
    pub latents: &'static str,
    pub mmd: Scalar,
}

/// Linear MMD of each checkpoint's label-model latents for each partition,
/// written to `mmd.csv`.
pub fn mmd(cfg: &ExperimentConfig) -> Result<Vec<MmdRow>> {
    let started = now();
    if cfg.checkpoint.is_empty() {
        return Err(Error::usage(
            "no checkpoint given, use --checkpoint PATH[,PATH...]",
        ));
    }
    fs::create_dir_all(&cfg.out_dir)?;
    let data = build_splits(&cfg.data)?;
    let mut rows = Vec::new();
    for path in &cfg.checkpoint {
        let model = SavedModel::load(path)?;
        if model.coding != data.test.coding() {
            return Err(Error::config(format!(
                "{} does not match the dataset's groups",
                path.display()
            )));
        }
        let test = evaluate(&model.label, &data.test, cfg.train.eval_batch)?;
        for &p in &cfg.partitions {
            let (latents, value) = match p {
                Partition::ByLabel => (
                    "test",
                    mmd_partition(&test.latents, data.test.labels(), true)?,
                ),
                Partition::ByConfounder => (
                    "test",
                    mmd_partition(&test.latents, data.test.confounders(), true)?,
                ),
                Partition::ByEnv => {
                    let val = evaluate(&model.label, &data.val, cfg.train.eval_batch)?;
                    let mut pooled = val.latents.clone();
                    pooled.data.extend_from_slice(&test.latents.data);
                    let envs: Vec<usize> = data
                        .val
                        .envs()
                        .iter()
                        .chain(data.test.envs())
                        .copied()
                        .collect();
                    ("val+test", mmd_partition(&pooled, &envs, true)?)
                }
            };
            rows.push(MmdRow {
                checkpoint: path.display().to_string(),
                algorithm: model.algorithm,
                partition: p,
                latents,
                mmd: value,
            });
        }
    }
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.checkpoint.clone(),
                r.algorithm.to_string(),
                r.partition.to_string(),
                r.latents.to_string(),
                r.mmd.to_string(),
            ]
        })
        .collect();
    write_csv(
        &cfg.out_dir.join("mmd.csv"),
        &strings(&["checkpoint", "algorithm", "partition", "latents", "mmd"]),
        &table,
    )?;
    finish_manifest(cfg, "mmd", started, Vec::new())?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeitRow {
    pub algorithm: Algorithm,
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub seconds_per_epoch: f64,
    /// Against the ERM row; `None` when ERM was not timed.
    pub ratio_vs_erm: Option<f64>,
}

/// Seconds per training epoch (sampling and steps, no evaluation) for each
/// algorithm at the same batch count, rows ordered by algorithm name.
pub fn timeit(cfg: &ExperimentConfig) -> Result<Vec<TimeitRow>> {
    let started = now();
    fs::create_dir_all(&cfg.out_dir)?;
    let data = build_splits(&cfg.data)?;
    let mut algos = cfg.timeit_algorithms.clone();
    algos.sort_by_key(|a| a.name());
    algos.dedup();
    let seed = cfg.seeds[0];
    let mut rows = Vec::new();
    let mut all_secs = Vec::new();
    for algorithm in algos {
        let tc = TrainConfig {
            algorithm,
            seed,
            ..cfg.train.clone()
        };
        let secs = time_epochs(&tc, &data.train, cfg.timeit_epochs)?;
        eprintln!("[timeit] {algorithm}: {secs:.3?} s/epoch");
        rows.push(TimeitRow {
            algorithm,
            epochs: cfg.timeit_epochs,
            batches_per_epoch: data.train.len().div_ceil(tc.batch_size),
            seconds_per_epoch: secs.iter().sum::<f64>() / secs.len() as f64,
            ratio_vs_erm: None,
        });
        all_secs.push((algorithm.to_string(), secs));
    }
    if let Some(erm) = rows
        .iter()
        .find(|r| r.algorithm == Algorithm::Erm)
        .map(|r| r.seconds_per_epoch)
    {
        for r in &mut rows {
            r.ratio_vs_erm = Some(r.seconds_per_epoch / erm);
        }
    }
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.algorithm.to_string(),
                r.epochs.to_string(),
                r.batches_per_epoch.to_string(),
                format!("{:.4}", r.seconds_per_epoch),
                r.ratio_vs_erm
                    .map(|x| format!("{x:.3}"))
                    .unwrap_or_default(),
            ]
        })
        .collect();
    write_csv(
        &cfg.out_dir.join("timeit.csv"),
        &strings(&[
            "algorithm",
            "epochs",
            "batches_per_epoch",
            "seconds_per_epoch",
            "ratio_vs_erm",
        ]),
        &table,
    )?;
    finish_manifest(cfg, "timeit", started, all_secs)?;
    Ok(rows)
}

/// Wall-clock seconds of each of `epochs` training epochs.
pub fn time_epochs(cfg: &TrainConfig, train: &Dataset, epochs: usize) -> Result<Vec<f64>> {
    let mut trainer = Trainer::new(cfg.clone(), train.image_shape(), train.coding())?;
    let mut sampler = Sampler::new(cfg.sampling, train, cfg.batch_size, cfg.seed)?;
    // one untimed step so allocation and cache warm-up are not charged to the first epoch
    trainer.step(&train.batch(&sampler.next_batch()))?;
    let mut out = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let start = Instant::now();
        for _ in 0..sampler.batches_per_epoch() {
            let batch = train.batch(&sampler.next_batch());
            trainer.step(&batch)?;
        }
        out.push(start.elapsed().as_secs_f64());
    }
    Ok(out)
}

fn screen_base(cfg: &ExperimentConfig) -> TrainConfig {
    TrainConfig {
        algorithm: Algorithm::Ex2l,
        max_epochs: cfg.screen_epochs,
        seed: cfg.seeds[0],
        ..cfg.train.clone()
    }
}

fn screen_dataset(cfg: &ExperimentConfig, name: &str) -> Result<ScreenDataset> {
    let dc = super::config::DataConfig {
        dataset: name.to_string(),
        n_train: cfg.screen_n_train,
        n_val: cfg.screen_n_val,
        n_test: 1,
        ..cfg.data.clone()
    };
    let s = build_splits(&dc)?;
    Ok(ScreenDataset {
        name: name.to_string(),
        train: s.train,
        val: s.val,
    })
}

/// Run `n_jobs` jobs in process or in worker processes; each job yields one
/// line of text.
fn run_jobs(
    cfg: &ExperimentConfig,
    workers: &Workers,
    task: &str,
    n_jobs: usize,
    local: &mut dyn FnMut(usize) -> Result<String>,
) -> Result<Vec<String>> {
    match workers {
        Workers::InProcess => (0..n_jobs).map(local).collect(),
        Workers::Processes { exe, n } => {
            let cfg_path = cfg.out_dir.join(format!(".{task}-worker.cfg"));
            fs::write(&cfg_path, cfg.to_text())?;
            let mut out = Vec::with_capacity(n_jobs);
            let jobs: Vec<usize> = (0..n_jobs).collect();
            for chunk in jobs.chunks((*n).max(1)) {
                let children = chunk
                    .iter()
                    .map(|&i| {
                        Command::new(exe)
                            .arg("__worker")
                            .arg(&cfg_path)
                            .arg(task)
                            .arg(i.to_string())
                            .stdout(std::process::Stdio::piped())
                            .stderr(std::process::Stdio::piped())
                            .spawn()
                    })
                    .collect::<std::io::Result<Vec<_>>>()?;
                for (child, &i) in children.into_iter().zip(chunk) {
                    let o = child.wait_with_output()?;
                    if !o.status.success() {
                        return Err(Error::Invariant(format!(
                            "{task} worker {i} failed: {}",
                            String::from_utf8_lossy(&o.stderr).trim()
                        )));
                    }
                    let text = String::from_utf8_lossy(&o.stdout);
                    let line = text.lines().last().unwrap_or_default().to_string();
                    eprintln!("[{task}] job {i} done: {line}");
                    out.push(line);
                }
            }
            fs::remove_file(&cfg_path)?;
            Ok(out)
        }
    }
}

/// One job of a fanned-out command, run by a worker process.
pub fn worker(cfg: &ExperimentConfig, task: &str, index: usize) -> Result<String> {
    match task {
        "screen" => {
            let jobs = screen_jobs();
            let d = cfg
                .screen_datasets
                .get(index / jobs.len())
                .ok_or_else(|| Error::usage(format!("screen job {index} out of range")))?;
            let row = run_screen_job(
                &screen_base(cfg),
                &screen_dataset(cfg, d)?,
                jobs[index % jobs.len()],
            )?;
            Ok(format!("{},{}", row.train_wga, row.val_wga))
        }
        "search" => {
            let trials = search_trials(cfg)?;
            let t = trials
                .get(index)
                .ok_or_else(|| Error::usage(format!("search trial {index} out of range")))?;
            let data = build_splits(&cfg.data)?;
            let r = run_trial(
                t,
                Splits {
                    train: &data.train,
                    val: &data.val,
                    test: None,
                },
            )?;
            Ok(format!("{},{},{}", r.best_epoch, r.val_aa, r.val_wga))
        }
        _ => Err(Error::usage(format!("unknown worker task '{task}'"))),
    }
}

fn parse_fields(line: &str, n: usize) -> Result<Vec<Scalar>> {
    let v: Vec<Scalar> = line
        .split(',')
        .map(|s| s.trim().parse::<Scalar>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Invariant(format!("malformed worker output '{line}'")))?;
    if v.len() != n {
        return Err(Error::Invariant(format!(
            "malformed worker output '{line}'"
        )));
    }
    Ok(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScreenReport {
    pub rows: Vec<ScreenRow>,
    /// Datasets in column order.
    pub datasets: Vec<String>,
    /// Kind-by-sampling rows with WGA averaged over datasets, table order.
    pub combined: Vec<ScreenRow>,
    /// Indices into `combined`, best validation WGA first.
    pub ranking: Vec<usize>,
    pub top3: Vec<crate::similarity::SimilarityKind>,
}

/// Screen every similarity kind under both samplers on each screening
/// dataset with eX2L at the reduced budget.
///
/// `screen.csv` has 22 rows. Its `train_wga` and `val_wga` columns average
/// the screening datasets, followed by per-dataset `<name>_train_wga` and
/// `<name>_val_wga` columns. `screen-<name>.csv` holds each dataset alone.
pub fn screen(cfg: &ExperimentConfig, workers: &Workers) -> Result<ScreenReport> {
    let started = now();
    fs::create_dir_all(&cfg.out_dir)?;
    let jobs = screen_jobs();
    let base = screen_base(cfg);
    let mut datasets: Vec<Option<ScreenDataset>> = vec![None; cfg.screen_datasets.len()];
    let mut local = |i: usize| -> Result<String> {
        let k = i / jobs.len();
        if datasets[k].is_none() {
            datasets[k] = Some(screen_dataset(cfg, &cfg.screen_datasets[k])?);
        }
        let row = run_screen_job(
            &base,
            datasets[k].as_ref().expect("built"),
            jobs[i % jobs.len()],
        )?;
        eprintln!(
            "[screen] {} {} {}: train wga {:.3} val wga {:.3}",
            row.dataset, row.kind, row.sampling, row.train_wga, row.val_wga
        );
        Ok(format!("{},{}", row.train_wga, row.val_wga))
    };
    let lines = run_jobs(
        cfg,
        workers,
        "screen",
        jobs.len() * cfg.screen_datasets.len(),
        &mut local,
    )?;
    let mut rows = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        let v = parse_fields(line, 2)?;
        let job = jobs[i % jobs.len()];
        rows.push(ScreenRow {
            dataset: cfg.screen_datasets[i / jobs.len()].clone(),
            kind: job.kind,
            sampling: job.sampling,
            train_wga: v[0],
            val_wga: v[1],
        });
    }
    let nd = cfg.screen_datasets.len() as Scalar;
    let combined: Vec<ScreenRow> = (0..jobs.len())
        .map(|j| {
            let parts: Vec<&ScreenRow> = rows.iter().skip(j).step_by(jobs.len()).collect();
            ScreenRow {
                dataset: "mean".into(),
                kind: jobs[j].kind,
                sampling: jobs[j].sampling,
                train_wga: parts.iter().map(|r| r.train_wga).sum::<Scalar>() / nd,
                val_wga: parts.iter().map(|r| r.val_wga).sum::<Scalar>() / nd,
            }
        })
        .collect();
    let ranking = rank_rows(&combined.iter().map(|r| r.val_wga).collect::<Vec<_>>());
    let top3 = top_kinds(
        &ranking
            .iter()
            .map(|&i| combined[i].kind)
            .collect::<Vec<_>>(),
        3,
    );

    let mut header = strings(&["name", "sampling", "train_wga", "val_wga"]);
    for d in &cfg.screen_datasets {
        header.push(format!("{d}_train_wga"));
        header.push(format!("{d}_val_wga"));
    }
    let table: Vec<Vec<String>> = combined
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let mut r = vec![
                c.kind.to_string(),
                c.sampling.to_string(),
                c.train_wga.to_string(),
                c.val_wga.to_string(),
            ];
            for part in rows.iter().skip(j).step_by(jobs.len()) {
                r.push(part.train_wga.to_string());
                r.push(part.val_wga.to_string());
            }
            r
        })
        .collect();
    write_csv(&cfg.out_dir.join("screen.csv"), &header, &table)?;
    for (k, d) in cfg.screen_datasets.iter().enumerate() {
        let part: Vec<Vec<String>> = rows[k * jobs.len()..(k + 1) * jobs.len()]
            .iter()
            .map(|r| {
                vec![
                    r.kind.to_string(),
                    r.sampling.to_string(),
                    r.train_wga.to_string(),
                    r.val_wga.to_string(),
                ]
            })
            .collect();
        write_csv(
            &cfg.out_dir.join(format!("screen-{d}.csv")),
            &header[..4],
            &part,
        )?;
    }
    let ranked: Vec<Vec<String>> = ranking
        .iter()
        .enumerate()
        .map(|(rank, &i)| {
            let c = &combined[i];
            vec![
                (rank + 1).to_string(),
                c.kind.to_string(),
                c.sampling.to_string(),
                c.val_wga.to_string(),
            ]
        })
        .collect();
    write_csv(
        &cfg.out_dir.join("screen-ranked.csv"),
        &strings(&["rank", "name", "sampling", "val_wga"]),
        &ranked,
    )?;
    finish_manifest(cfg, "screen", started, Vec::new())?;
    Ok(ScreenReport {
        rows,
        datasets: cfg.screen_datasets.clone(),
        combined,
        ranking,
        top3,
    })
}

fn search_trials(cfg: &ExperimentConfig) -> Result<Vec<Trial>> {
    let space = SearchSpace::preset(&cfg.search_space)?;
    let base = TrainConfig {
        seed: cfg.seeds[0],
        ..cfg.train.clone()
    };
    Ok(space.draw_trials(&base, cfg.trials, cfg.search_seed))
}

/// Randomized search over the configured space. Writes `trials.csv` and
/// `best.cfg`, a config file with the winning values.
pub fn search(cfg: &ExperimentConfig, workers: &Workers) -> Result<(Vec<TrialResult>, usize)> {
    let started = now();
    fs::create_dir_all(&cfg.out_dir)?;
    let trials = search_trials(cfg)?;
    let mut data: Option<SplitData> = None;
    let mut local = |i: usize| -> Result<String> {
        if data.is_none() {
            data = Some(build_splits(&cfg.data)?);
        }
        let d = data.as_ref().expect("built");
        let r = run_trial(
            &trials[i],
            Splits {
                train: &d.train,
                val: &d.val,
                test: None,
            },
        )?;
        eprintln!(
            "[search] trial {i}: val aa {:.3} wga {:.3}",
            r.val_aa, r.val_wga
        );
        Ok(format!("{},{},{}", r.best_epoch, r.val_aa, r.val_wga))
    };
    let lines = run_jobs(cfg, workers, "search", trials.len(), &mut local)?;
    let results = lines
        .iter()
        .zip(&trials)
        .map(|(line, t)| {
            let v = parse_fields(line, 3)?;
            Ok(TrialResult {
                trial: t.clone(),
                best_epoch: v[0] as usize,
                val_aa: v[1],
                val_wga: v[2],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = best_trial(&results).expect("at least one trial");
    let table: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            let c = &r.trial.config;
            vec![
                r.trial.index.to_string(),
                c.lr_label.to_string(),
                c.lr_conf.to_string(),
                c.wd_label.to_string(),
                c.wd_conf.to_string(),
                c.lambda_c.to_string(),
                c.lambda_sim.to_string(),
                c.groupdro_eta.to_string(),
                r.best_epoch.to_string(),
                r.val_aa.to_string(),
                r.val_wga.to_string(),
                r.score().to_string(),
            ]
        })
        .collect();
    write_csv(
        &cfg.out_dir.join("trials.csv"),
        &strings(&[
            "trial",
            "lr_label",
            "lr_conf",
            "wd_label",
            "wd_conf",
            "lambda_c",
            "lambda_sim",
            "groupdro_eta",
            "best_epoch",
            "val_aa",
            "val_wga",
            "score",
        ]),
        &table,
    )?;
    let best_cfg = ExperimentConfig {
        train: results[best].trial.config.clone(),
        ..cfg.clone()
    };
    fs::write(cfg.out_dir.join("best.cfg"), best_cfg.to_text())?;
    finish_manifest(cfg, "search", started, Vec::new())?;
    Ok((results, best))
}
