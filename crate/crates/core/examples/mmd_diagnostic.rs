//! Linear MMD between latent means of label, confounder and environment
//! partitions, before and after a few epochs of ERM and eX2L.
//!
//!     cargo run --release --example mmd_diagnostic -- [epochs]

use ex2l::data::{CmnistSpec, SamplingKind};
use ex2l::metrics::{mmd_partition_report, Partition};
use ex2l::train::{evaluate, fit, Algorithm, Splits, TrainConfig, Trainer};
use ex2l::Scalar;

fn show(v: Option<Scalar>) -> String {
    v.map_or("n/a".into(), |v| format!("{v:.3e}"))
}

fn main() -> anyhow::Result<()> {
    let epochs: usize = std::env::args().nth(1).map_or(Ok(3), |s| s.parse())?;
    let spec = CmnistSpec {
        n_train: 4000,
        ..CmnistSpec::default()
    };
    let (train, val, test) = (spec.train(), spec.val(), spec.test());

    let untrained = Trainer::new(TrainConfig::default(), train.image_shape(), train.coding())?;
    let e = evaluate(untrained.label_net(), &test, 256)?;
    let parts = [Partition::ByLabel, Partition::ByConfounder];
    let report = mmd_partition_report(
        &e.latents,
        test.labels(),
        test.confounders(),
        test.envs(),
        &parts,
        true,
    )?;
    for (p, v) in report {
        println!("untrained {p}: {v:.3e}");
    }

    for (algorithm, sampling) in [
        (Algorithm::Erm, SamplingKind::Random),
        (Algorithm::Ex2l, SamplingKind::UniformGroup),
    ] {
        let cfg = TrainConfig {
            algorithm,
            sampling,
            max_epochs: epochs,
            ..TrainConfig::default()
        };
        let res = fit(
            cfg,
            Splits {
                train: &train,
                val: &val,
                test: Some(&test),
            },
            &mut |_| {},
        )?;
        let m = res.mmd.expect("test split given");
        println!(
            "{algorithm}: by-label {}  by-confounder {}  by-env {}  test wga {:.3}",
            show(m.y),
            show(m.c),
            show(m.env),
            res.test_eval.expect("test split given").report.wga
        );
    }
    Ok(())
}
