//! Save a trained model to a checkpoint, load it back and check that the
//! reloaded network predicts exactly the same.
//!
//!     cargo run --release --example checkpoint_roundtrip

use ex2l::checkpoint::SavedModel;
use ex2l::data::{CmnistSpec, SamplingKind};
use ex2l::train::{evaluate, fit, Algorithm, Splits, TrainConfig};

fn main() -> anyhow::Result<()> {
    let spec = CmnistSpec {
        n_train: 1000,
        n_val: 500,
        n_test: 500,
        ..CmnistSpec::default()
    };
    let (train, val, test) = (spec.train(), spec.val(), spec.test());
    let cfg = TrainConfig {
        algorithm: Algorithm::Ex2l,
        sampling: SamplingKind::UniformGroup,
        max_epochs: 2,
        ..TrainConfig::default()
    };
    let res = fit(
        cfg,
        Splits {
            train: &train,
            val: &val,
            test: None,
        },
        &mut |_| {},
    )?;
    let saved = SavedModel::from_trainer(
        &res.trainer,
        res.best.epoch,
        res.best.val_aa,
        res.best.val_wga,
    );
    let dir = std::env::temp_dir().join("ex2l-checkpoint-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("model.ckpt");
    saved.save(&path)?;
    println!(
        "wrote {} ({} bytes)",
        path.display(),
        std::fs::metadata(&path)?.len()
    );

    let back = SavedModel::load(&path)?;
    let before = evaluate(&saved.label, &test, 256)?;
    let after = evaluate(&back.label, &test, 256)?;
    println!(
        "{} model from epoch {}, confounder model present: {}",
        back.algorithm,
        back.epoch,
        back.conf.is_some()
    );
    println!(
        "test wga before {:.4}, after {:.4}, identical predictions: {}",
        before.report.wga,
        after.report.wga,
        before.preds == after.preds
    );
    Ok(())
}
