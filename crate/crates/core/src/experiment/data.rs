//! Turning a data config into train, validation and test splits.

use crate::data::{
    cmnist_from_digits, group_table_splits, load_mnist_idx, CmnistSpec, Dataset, GroupTable,
};
use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::Scalar;

use super::config::DataConfig;

#[derive(Debug, Clone)]
pub struct SplitData {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Build the splits of `cfg.dataset`.
///
/// `synth-cmnist` and `mnist-idx` use the colored-digit recipe with the
/// configured environments. `mnist-idx` takes consecutive digits from the
/// file for train, then validation, then test. Group-table datasets divide
/// train and validation over the table's environments and test on a
/// group-balanced environment.
pub fn build_splits(cfg: &DataConfig) -> Result<SplitData> {
    match cfg.dataset.as_str() {
        "synth-cmnist" => {
            let spec = cmnist_spec(cfg);
            Ok(SplitData {
                train: spec.train(),
                val: spec.val(),
                test: spec.test(),
            })
        }
        "mnist-idx" => mnist_splits(cfg),
        "waterbirds" | "celeba" | "group-table" => {
            let table = match cfg.dataset.as_str() {
                "group-table" => {
                    let path = cfg
                        .table
                        .as_ref()
                        .ok_or_else(|| Error::config("group-table needs a table path"))?;
                    GroupTable::from_csv_path(path)?
                }
                name => GroupTable::builtin(name).expect("built-in table"),
            };
            let (train, val, test) =
                group_table_splits(&table, cfg.n_train, cfg.n_val, cfg.n_test, cfg.data_seed);
            Ok(SplitData { train, val, test })
        }
        other => Err(Error::config(format!("unknown dataset '{other}'"))),
    }
}

fn cmnist_spec(cfg: &DataConfig) -> CmnistSpec {
    CmnistSpec {
        train_envs: cfg.train_envs.clone(),
        test_env: cfg.test_env,
        flip: cfg.flip,
        n_train: cfg.n_train,
        n_val: cfg.n_val,
        n_test: cfg.n_test,
        color_source: cfg.color_source,
        seed: cfg.data_seed,
    }
}

fn mnist_splits(cfg: &DataConfig) -> Result<SplitData> {
    let (Some(images), Some(labels)) = (&cfg.mnist_images, &cfg.mnist_labels) else {
        return Err(Error::config(
            "mnist-idx needs mnist_images and mnist_labels",
        ));
    };
    let digits = load_mnist_idx(images, labels)?;
    let need = cfg.n_train + cfg.n_val + cfg.n_test;
    if digits.len() < need {
        return Err(Error::data(format!(
            "{} digits in file, {need} requested",
            digits.len()
        )));
    }
    let split = |start: usize,
                 n: usize,
                 envs: &[Scalar],
                 env_base: usize,
                 tag: Stream|
     -> Result<Dataset> {
        let mut out: Option<Dataset> = None;
        let k = envs.len();
        for (j, &e) in envs.iter().enumerate() {
            let (a, b) = (start + j * n / k, start + (j + 1) * n / k);
            let seed = cfg.data_seed ^ ((tag as u64) << 40) ^ ((j as u64) << 32);
            let part = cmnist_from_digits(
                &digits.slice(a..b),
                e,
                cfg.flip,
                cfg.color_source,
                env_base + j,
                seed,
            )?;
            match &mut out {
                Some(d) => d.extend(&part)?,
                None => out = Some(part),
            }
        }
        Ok(out.expect("at least one environment"))
    };
    let envs = &cfg.train_envs;
    Ok(SplitData {
        train: split(0, cfg.n_train, envs, 0, Stream::TrainData)?,
        val: split(cfg.n_train, cfg.n_val, envs, 0, Stream::ValData)?,
        test: split(
            cfg.n_train + cfg.n_val,
            cfg.n_test,
            &[cfg.test_env],
            envs.len(),
            Stream::TestData,
        )?,
    })
}
