//! Screen all eleven similarity kinds under both samplers on a small
//! synthetic set and rank them by validation worst-group accuracy.
//!
//!     cargo run --release --example screen_similarities -- [epochs]

use ex2l::data::CmnistSpec;
use ex2l::train::{rank_rows, screening_harness, ScreenDataset, TrainConfig};

fn main() -> anyhow::Result<()> {
    let epochs: usize = std::env::args().nth(1).map_or(Ok(2), |s| s.parse())?;
    let spec = CmnistSpec {
        n_train: 1000,
        n_val: 500,
        ..CmnistSpec::default()
    };
    let data = ScreenDataset {
        name: "synth-cmnist".into(),
        train: spec.train(),
        val: spec.val(),
    };
    let base = TrainConfig {
        max_epochs: epochs,
        ..TrainConfig::default()
    };
    let rows = screening_harness(&base, std::slice::from_ref(&data))?;
    let val: Vec<_> = rows.iter().map(|r| r.val_wga).collect();
    println!(
        "{:<4} {:<10} {:<14} {:>9} {:>7}",
        "rank", "kind", "sampling", "train wga", "val wga"
    );
    for (rank, i) in rank_rows(&val).into_iter().enumerate() {
        let r = &rows[i];
        println!(
            "{:<4} {:<10} {:<14} {:>9.3} {:>7.3}",
            rank + 1,
            r.kind.name(),
            r.sampling.name(),
            r.train_wga,
            r.val_wga
        );
    }
    Ok(())
}
