//! A few trials of random hyperparameter search for eX2L.
//!
//!     cargo run --release --example random_search -- [trials]

use ex2l::data::CmnistSpec;
use ex2l::train::{random_search, Algorithm, SearchSpace, Splits, TrainConfig};

fn main() -> anyhow::Result<()> {
    let trials: usize = std::env::args().nth(1).map_or(Ok(4), |s| s.parse())?;
    let spec = CmnistSpec {
        n_train: 1000,
        n_val: 500,
        ..CmnistSpec::default()
    };
    let (train, val) = (spec.train(), spec.val());
    let base = TrainConfig {
        algorithm: Algorithm::Ex2l,
        max_epochs: 2,
        ..TrainConfig::default()
    };
    let (results, best) = random_search(
        &base,
        &SearchSpace::desk(),
        trials,
        0,
        Splits {
            train: &train,
            val: &val,
            test: None,
        },
    )?;
    for r in &results {
        let c = &r.trial.config;
        println!(
            "trial {}: lr {:.2e} lambda_c {:.2} lambda_sim {:.2} -> epoch {} val aa {:.3} wga {:.3}",
            r.trial.index, c.lr_label, c.lambda_c, c.lambda_sim, r.best_epoch, r.val_aa, r.val_wga
        );
    }
    println!("best trial: {}", results[best].trial.index);
    Ok(())
}
