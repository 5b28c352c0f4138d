//! Flat `key = value` configs with `[section]` headers, and `--key=value`
//! command-line overrides of the same keys.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::data::{ColorSource, SamplingKind};
use crate::error::{Error, Result};
use crate::metrics::Partition;
use crate::similarity::SimilarityKind;
use crate::train::{Algorithm, TrainConfig};
use crate::Scalar;

pub const SECTIONS: [&str; 6] = ["train", "data", "run", "search", "screen", "timeit"];

/// Names accepted by the `dataset` key and by `screen_datasets`.
pub const DATASETS: [&str; 5] = [
    "synth-cmnist",
    "mnist-idx",
    "waterbirds",
    "celeba",
    "group-table",
];

/// One `key = value` assignment and where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct RawEntry {
    pub key: String,
    pub value: String,
    pub origin: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub dataset: String,
    /// Group-table CSV, used when `dataset = group-table`.
    pub table: Option<PathBuf>,
    pub mnist_images: Option<PathBuf>,
    pub mnist_labels: Option<PathBuf>,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub train_envs: Vec<Scalar>,
    pub test_env: Scalar,
    pub flip: Scalar,
    pub color_source: ColorSource,
    /// Data are generated from this seed, independent of the training seeds.
    pub data_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            dataset: "synth-cmnist".into(),
            table: None,
            mnist_images: None,
            mnist_labels: None,
            n_train: 10_000,
            n_val: 2_000,
            n_test: 2_000,
            train_envs: vec![0.9, 0.8],
            test_env: 0.1,
            flip: 0.25,
            color_source: ColorSource::NoisyLabel,
            data_seed: 0,
        }
    }
}

/// Everything a command needs; every field has a config key.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// `seed` is overwritten per run from `seeds`.
    pub train: TrainConfig,
    pub data: DataConfig,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    /// Samples per model to export as heatmaps (0 for none).
    pub heatmaps: usize,
    pub heatmap_split: String,
    pub parallel_trials: usize,
    pub checkpoint: Vec<PathBuf>,
    pub partitions: Vec<Partition>,
    pub trials: usize,
    pub search_space: String,
    pub search_seed: u64,
    pub screen_datasets: Vec<String>,
    pub screen_epochs: usize,
    pub screen_n_train: usize,
    pub screen_n_val: usize,
    pub timeit_algorithms: Vec<Algorithm>,
    pub timeit_epochs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            train: TrainConfig::default(),
            data: DataConfig::default(),
            seeds: vec![42],
            out_dir: PathBuf::from("out"),
            heatmaps: 0,
            heatmap_split: "test".into(),
            parallel_trials: 1,
            checkpoint: Vec::new(),
            partitions: Partition::ALL.to_vec(),
            trials: 20,
            search_space: "desk".into(),
            search_seed: 0,
            screen_datasets: vec!["synth-cmnist".into(), "waterbirds".into()],
            screen_epochs: 3,
            screen_n_train: 2_000,
            screen_n_val: 1_000,
            timeit_algorithms: vec![Algorithm::Erm, Algorithm::Ex2l],
            timeit_epochs: 2,
        }
    }
}

fn list<T: Display>(v: &[T]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn path_opt(p: &Option<PathBuf>) -> String {
    p.as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_default()
}

fn parse<T: FromStr>(key: &str, v: &str) -> std::result::Result<T, String>
where
    T::Err: Display,
{
    v.parse::<T>()
        .map_err(|e| format!("{key}: cannot parse '{v}': {e}"))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: Display,
{
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse(key, s.trim())).collect()
}

fn parse_path_opt(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

impl ExperimentConfig {
    /// `(section, key, value)` for every key, in echo order.
    pub fn entries(&self) -> Vec<(&'static str, &'static str, String)> {
        let t = &self.train;
        let d = &self.data;
        vec![
            ("train", "algorithm", t.algorithm.to_string()),
            ("train", "similarity", t.similarity.kind.to_string()),
            ("train", "sampling", t.sampling.to_string()),
            ("train", "lambda_c", t.lambda_c.to_string()),
            ("train", "lambda_sim", t.lambda_sim.to_string()),
            ("train", "groupdro_eta", t.groupdro_eta.to_string()),
            ("train", "lr_label", t.lr_label.to_string()),
            ("train", "lr_conf", t.lr_conf.to_string()),
            ("train", "wd_label", t.wd_label.to_string()),
            ("train", "wd_conf", t.wd_conf.to_string()),
            ("train", "batch_size", t.batch_size.to_string()),
            ("train", "max_epochs", t.max_epochs.to_string()),
            ("train", "patience", t.patience.to_string()),
            ("train", "min_delta", t.min_delta.to_string()),
            ("train", "eval_batch", t.eval_batch.to_string()),
            ("train", "sim_eps", t.similarity.eps.to_string()),
            ("train", "ssim_k1", t.similarity.ssim.k1.to_string()),
            ("train", "ssim_k2", t.similarity.ssim.k2.to_string()),
            ("train", "ssim_alpha", t.similarity.ssim.alpha.to_string()),
            ("train", "ssim_beta", t.similarity.ssim.beta.to_string()),
            ("train", "ssim_gamma", t.similarity.ssim.gamma.to_string()),
            ("data", "dataset", d.dataset.clone()),
            ("data", "table", path_opt(&d.table)),
            ("data", "mnist_images", path_opt(&d.mnist_images)),
            ("data", "mnist_labels", path_opt(&d.mnist_labels)),
            ("data", "n_train", d.n_train.to_string()),
            ("data", "n_val", d.n_val.to_string()),
            ("data", "n_test", d.n_test.to_string()),
            ("data", "train_envs", list(&d.train_envs)),
            ("data", "test_env", d.test_env.to_string()),
            ("data", "flip", d.flip.to_string()),
            ("data", "color_source", d.color_source.name().to_string()),
            ("data", "data_seed", d.data_seed.to_string()),
            ("run", "seeds", list(&self.seeds)),
            ("run", "out_dir", self.out_dir.display().to_string()),
            ("run", "heatmaps", self.heatmaps.to_string()),
            ("run", "heatmap_split", self.heatmap_split.clone()),
            ("run", "parallel_trials", self.parallel_trials.to_string()),
            (
                "run",
                "checkpoint",
                self.checkpoint
                    .iter()
                    .map(|p| p.display().to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("run", "partitions", list(&self.partitions)),
            ("search", "trials", self.trials.to_string()),
            ("search", "search_space", self.search_space.clone()),
            ("search", "search_seed", self.search_seed.to_string()),
            ("screen", "screen_datasets", self.screen_datasets.join(",")),
            ("screen", "screen_epochs", self.screen_epochs.to_string()),
            ("screen", "screen_n_train", self.screen_n_train.to_string()),
            ("screen", "screen_n_val", self.screen_n_val.to_string()),
            ("timeit", "timeit_algorithms", list(&self.timeit_algorithms)),
            ("timeit", "timeit_epochs", self.timeit_epochs.to_string()),
        ]
    }

    pub fn section_of(key: &str) -> Option<&'static str> {
        Self::default()
            .entries()
            .into_iter()
            .find(|e| e.1 == key)
            .map(|e| e.0)
    }

    /// Assign one key. Errors are messages for the collected report.
    pub fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        let t = &mut self.train;
        let d = &mut self.data;
        match key {
            "algorithm" => t.algorithm = parse(key, v)?,
            "similarity" => t.similarity.kind = parse::<SimilarityKind>(key, v)?,
            "sampling" => t.sampling = parse::<SamplingKind>(key, v)?,
            "lambda_c" => t.lambda_c = parse(key, v)?,
            "lambda_sim" => t.lambda_sim = parse(key, v)?,
            "groupdro_eta" => t.groupdro_eta = parse(key, v)?,
            "lr_label" => t.lr_label = parse(key, v)?,
            "lr_conf" => t.lr_conf = parse(key, v)?,
            "wd_label" => t.wd_label = parse(key, v)?,
            "wd_conf" => t.wd_conf = parse(key, v)?,
            "batch_size" => t.batch_size = parse(key, v)?,
            "max_epochs" => t.max_epochs = parse(key, v)?,
            "patience" => t.patience = parse(key, v)?,
            "min_delta" => t.min_delta = parse(key, v)?,
            "eval_batch" => t.eval_batch = parse(key, v)?,
            "sim_eps" => t.similarity.eps = parse(key, v)?,
            "ssim_k1" => t.similarity.ssim.k1 = parse(key, v)?,
            "ssim_k2" => t.similarity.ssim.k2 = parse(key, v)?,
            "ssim_alpha" => t.similarity.ssim.alpha = parse(key, v)?,
            "ssim_beta" => t.similarity.ssim.beta = parse(key, v)?,
            "ssim_gamma" => t.similarity.ssim.gamma = parse(key, v)?,
            "dataset" => d.dataset = v.to_string(),
            "table" => d.table = parse_path_opt(v),
            "mnist_images" => d.mnist_images = parse_path_opt(v),
            "mnist_labels" => d.mnist_labels = parse_path_opt(v),
            "n_train" => d.n_train = parse(key, v)?,
            "n_val" => d.n_val = parse(key, v)?,
            "n_test" => d.n_test = parse(key, v)?,
            "train_envs" => d.train_envs = parse_list(key, v)?,
            "test_env" => d.test_env = parse(key, v)?,
            "flip" => d.flip = parse(key, v)?,
            "color_source" => {
                d.color_source = ColorSource::parse(v).map_err(|e| format!("{key}: {e}"))?
            }
            "data_seed" => d.data_seed = parse(key, v)?,
            "seeds" => self.seeds = parse_list(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "heatmaps" => self.heatmaps = parse(key, v)?,
            "heatmap_split" => self.heatmap_split = v.to_string(),
            "parallel_trials" => self.parallel_trials = parse(key, v)?,
            "checkpoint" => {
                self.checkpoint = v
                    .split(',')
                    .filter(|s| !s.is_empty())
                    .map(PathBuf::from)
                    .collect()
            }
            "partitions" => self.partitions = parse_list(key, v)?,
            "trials" => self.trials = parse(key, v)?,
            "search_space" => self.search_space = v.to_string(),
            "search_seed" => self.search_seed = parse(key, v)?,
            "screen_datasets" => self.screen_datasets = parse_list(key, v)?,
            "screen_epochs" => self.screen_epochs = parse(key, v)?,
            "screen_n_train" => self.screen_n_train = parse(key, v)?,
            "screen_n_val" => self.screen_n_val = parse(key, v)?,
            "timeit_algorithms" => self.timeit_algorithms = parse_list(key, v)?,
            "timeit_epochs" => self.timeit_epochs = parse(key, v)?,
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    /// Semantic checks; every violation is reported.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = self.train.validate();
        let d = &self.data;
        if !DATASETS.contains(&d.dataset.as_str()) {
            errs.push(format!(
                "dataset '{}' unknown, expected one of: {}",
                d.dataset,
                DATASETS.join(", ")
            ));
        }
        if d.dataset == "group-table" && d.table.is_none() {
            errs.push("dataset group-table needs a table path".into());
        }
        if d.dataset == "mnist-idx" && (d.mnist_images.is_none() || d.mnist_labels.is_none()) {
            errs.push("dataset mnist-idx needs mnist_images and mnist_labels".into());
        }
        let cm = crate::data::CmnistSpec {
            train_envs: d.train_envs.clone(),
            test_env: d.test_env,
            flip: d.flip,
            n_train: d.n_train,
            n_val: d.n_val,
            n_test: d.n_test,
            color_source: d.color_source,
            seed: d.data_seed,
        };
        errs.extend(cm.validate());
        if self.seeds.is_empty() {
            errs.push("seeds must list at least one seed".into());
        }
        if !["val", "test"].contains(&self.heatmap_split.as_str()) {
            errs.push(format!(
                "heatmap_split '{}' must be val or test",
                self.heatmap_split
            ));
        }
        if self.parallel_trials == 0 {
            errs.push("parallel_trials must be >= 1".into());
        }
        if self.trials == 0 {
            errs.push("trials must be >= 1".into());
        }
        if !["desk", "published-mnist"].contains(&self.search_space.as_str()) {
            errs.push(format!(
                "search_space '{}' must be desk or published-mnist",
                self.search_space
            ));
        }
        if self.screen_datasets.is_empty() {
            errs.push("screen_datasets must list at least one dataset".into());
        }
        for s in &self.screen_datasets {
            if !DATASETS.contains(&s.as_str()) {
                errs.push(format!(
                    "screen dataset '{s}' unknown, expected one of: {}",
                    DATASETS.join(", ")
                ));
            }
        }
        for (k, v) in [
            ("screen_epochs", self.screen_epochs),
            ("screen_n_train", self.screen_n_train),
            ("screen_n_val", self.screen_n_val),
            ("timeit_epochs", self.timeit_epochs),
        ] {
            if v == 0 {
                errs.push(format!("{k} must be >= 1"));
            }
        }
        if self.timeit_algorithms.is_empty() {
            errs.push("timeit_algorithms must list at least one algorithm".into());
        }
        if self.partitions.is_empty() {
            errs.push("partitions must list at least one partition".into());
        }
        errs
    }

    /// Apply entries in order over the defaults, then validate. All problems
    /// are reported together as one configuration error.
    pub fn resolve(entries: &[RawEntry]) -> Result<Self> {
        Self::resolve_with(entries, Vec::new())
    }

    fn resolve_with(entries: &[RawEntry], mut errs: Vec<String>) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for e in entries {
            if let Err(m) = cfg.set(&e.key, &e.value) {
                errs.push(format!("{}: {m}", e.origin));
            }
        }
        errs.extend(cfg.validate());
        if errs.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::config(errs.join("\n  ")))
        }
    }

    /// Config file text echoing every resolved value; parses back to `self`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut current = "";
        for (section, key, value) in self.entries() {
            if section != current {
                if !current.is_empty() {
                    out.push('\n');
                }
                out.push_str(&format!("[{section}]\n"));
                current = section;
            }
            out.push_str(&format!("{key} = {value}\n"));
        }
        out
    }

    /// Git-style blob hash of the echoed config.
    pub fn content_hash(&self) -> String {
        let text = self.to_text();
        let mut h = Sha256::new();
        h.update(format!("blob {}\0", text.len()));
        h.update(text.as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Read a config file, then apply command-line overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut entries = Vec::new();
        let mut errs = Vec::new();
        if let Some(p) = path {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::config(format!("cannot read config {}: {e}", p.display())))?;
            let (e, bad) = parse_config_text(&text, &p.display().to_string());
            entries.extend(e);
            errs.extend(bad);
        }
        let (e, bad) = parse_overrides(overrides);
        entries.extend(e);
        errs.extend(bad);
        Self::resolve_with(&entries, errs)
    }
}

fn normalize_key(k: &str) -> String {
    k.trim().replace('-', "_")
}

/// Parse config text into valid entries and error messages. `#` starts a
/// comment line. A key inside a section must
/// belong to it; keys before any section header may be any key.
pub fn parse_config_text(text: &str, name: &str) -> (Vec<RawEntry>, Vec<String>) {
    let mut entries = Vec::new();
    let mut errs = Vec::new();
    let mut section: Option<String> = None;
    for (i, line) in text.lines().enumerate() {
        let origin = format!("{name}:{}", i + 1);
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(s) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let s = s.trim();
            if !SECTIONS.contains(&s) {
                errs.push(format!(
                    "{origin}: unknown section [{s}], expected one of: {}",
                    SECTIONS.join(", ")
                ));
            }
            section = Some(s.to_string());
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            errs.push(format!("{origin}: expected 'key = value', got '{line}'"));
            continue;
        };
        let key = normalize_key(k);
        match (ExperimentConfig::section_of(&key), &section) {
            (None, _) => errs.push(format!("{origin}: unknown key '{key}'")),
            (Some(home), Some(s)) if home != s => errs.push(format!(
                "{origin}: key '{key}' belongs in [{home}], not [{s}]"
            )),
            _ => entries.push(RawEntry {
                key,
                value: v.trim().to_string(),
                origin,
            }),
        }
    }
    (entries, errs)
}

/// `--key=value` or `--key value`; keys may use dashes or a `section.`
/// prefix. Returns valid entries and error messages.
pub fn parse_overrides(args: &[String]) -> (Vec<RawEntry>, Vec<String>) {
    let mut entries = Vec::new();
    let mut errs = Vec::new();
    let mut i = 0;
    while i < args.len() {
        let a = &args[i];
        i += 1;
        let Some(body) = a.strip_prefix("--") else {
            errs.push(format!(
                "unexpected argument '{a}', overrides look like --key=value"
            ));
            continue;
        };
        let (k, v) = match body.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None if i < args.len() => {
                i += 1;
                (body.to_string(), args[i - 1].clone())
            }
            None => {
                errs.push(format!("--{body} is missing a value"));
                continue;
            }
        };
        let mut key = normalize_key(&k);
        if let Some((sec, rest)) = key.split_once('.') {
            if ExperimentConfig::section_of(rest) == Some(sec) {
                key = rest.to_string();
            }
        }
        if ExperimentConfig::section_of(&key).is_none() {
            errs.push(format!("--{k}: unknown key '{key}'"));
            continue;
        }
        entries.push(RawEntry {
            key,
            value: v.trim().to_string(),
            origin: format!("--{k}"),
        });
    }
    (entries, errs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn echo_round_trips() {
        let mut c = ExperimentConfig::default();
        c.train.lambda_sim = 0.123456789;
        c.seeds = vec![42, 8, 777];
        c.data.table = Some("t.csv".into());
        let (e, errs) = parse_config_text(&c.to_text(), "x");
        assert!(errs.is_empty());
        let back = ExperimentConfig::resolve(&e).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.content_hash(), c.content_hash());
        assert_eq!(c.content_hash().len(), 64);
    }

    #[test]
    fn overrides_in_both_forms() {
        let (e, _) = parse_overrides(&s(&[
            "--algorithm",
            "ex2l",
            "--train.lambda-c=2.5",
            "--seeds=42,8",
        ]));
        let c = ExperimentConfig::resolve(&e).unwrap();
        assert_eq!(c.train.algorithm, Algorithm::Ex2l);
        assert_eq!(c.train.lambda_c, 2.5);
        assert_eq!(c.seeds, vec![42, 8]);
    }

    #[test]
    fn all_errors_reported() {
        let text = "[train]\nlambda_c = -1\nlr_label = 0\nbatch_size = x\n[data]\nalgorithm = erm\nbogus = 1\n";
        let (_, errs) = parse_config_text(text, "f");
        assert_eq!(errs.len(), 2, "{errs:?}");
        let (e, _) = parse_overrides(&s(&["--lambda-c=-1", "--lr-label=0", "--flip=2"]));
        let msg = ExperimentConfig::resolve(&e).unwrap_err().to_string();
        assert!(
            msg.contains("lambda_c") && msg.contains("lr_label") && msg.contains("flip"),
            "{msg}"
        );
        let err = ExperimentConfig::load(None, &s(&["--nope=1", "--batch_size=x", "--patience=0"]))
            .unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let msg = err.to_string();
        assert!(
            msg.contains("nope") && msg.contains("batch_size") && msg.contains("patience"),
            "{msg}"
        );
    }
}
