//! ERM with random batches against eX2L-MAE with uniform-group batches on
//! synthetic CMNIST.
//!
//!     cargo run --release --example cmnist_compare -- [epochs] [n_train] [seed]

use ex2l::data::{CmnistSpec, SamplingKind};
use ex2l::similarity::{Similarity, SimilarityKind};
use ex2l::train::{fit, Algorithm, Splits, TrainConfig};

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let epochs: usize = args.first().map_or(Ok(5), |s| s.parse())?;
    let n_train: usize = args.get(1).map_or(Ok(10_000), |s| s.parse())?;
    let seed: u64 = args.get(2).map_or(Ok(42), |s| s.parse())?;

    let spec = CmnistSpec {
        n_train,
        seed,
        ..CmnistSpec::default()
    };
    let (train, val, test) = (spec.train(), spec.val(), spec.test());
    let splits = Splits {
        train: &train,
        val: &val,
        test: Some(&test),
    };

    let runs = [
        ("erm/random", Algorithm::Erm, SamplingKind::Random),
        (
            "ex2l-mae/uniform-group",
            Algorithm::Ex2l,
            SamplingKind::UniformGroup,
        ),
    ];
    for (name, algorithm, sampling) in runs {
        let cfg = TrainConfig {
            algorithm,
            sampling,
            similarity: Similarity::new(SimilarityKind::NegMae),
            max_epochs: epochs,
            seed,
            ..TrainConfig::default()
        };
        let out = fit(cfg, splits, &mut |r| {
            let t = r.test.as_ref().expect("test split given");
            let mmd_c = r.mmd.and_then(|m| m.c).unwrap_or(f64::NAN as _);
            println!(
                "{name} epoch {:>2}  {:.1}s  loss {:.3}  val aa {:.3} wga {:.3}  test aa {:.3} wga {:.3}  mmd_c {:.4}",
                r.epoch, r.seconds, r.train_loss, r.val.aa, r.val.wga, t.aa, t.wga, mmd_c
            );
        })?;
        let test = out.test_eval.expect("test split given").report;
        println!(
            "{name}: selected epoch {}, test AA {:.3}, test WGA {:.3}\n",
            out.best.epoch, test.aa, test.wga
        );
    }
    Ok(())
}
