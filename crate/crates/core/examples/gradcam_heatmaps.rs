//! Train a small eX2L model, then write Grad-CAM heatmaps of both models for
//! a few test images as PGM files.
//!
//!     cargo run --release --example gradcam_heatmaps -- [out_dir]

use std::path::PathBuf;

use ex2l::data::{CmnistSpec, SamplingKind};
use ex2l::gradcam;
use ex2l::train::{fit, Algorithm, Splits, TrainConfig};
use ex2l::Graph;

fn main() -> anyhow::Result<()> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "heatmaps".into())
        .into();
    std::fs::create_dir_all(&out)?;

    let spec = CmnistSpec {
        n_train: 2000,
        n_val: 500,
        n_test: 500,
        ..CmnistSpec::default()
    };
    let (train, val, test) = (spec.train(), spec.val(), spec.test());
    let cfg = TrainConfig {
        algorithm: Algorithm::Ex2l,
        sampling: SamplingKind::UniformGroup,
        max_epochs: 3,
        ..TrainConfig::default()
    };
    let res = fit(
        cfg,
        Splits {
            train: &train,
            val: &val,
            test: None,
        },
        &mut |r| println!("epoch {} val wga {:.3}", r.epoch, r.val.wga),
    )?;

    let batch = test.batch(&[0, 1, 2, 3]);
    let label = res.trainer.label_net();
    let conf = res.trainer.conf_net().expect("eX2L has a confounder model");
    let mut g = Graph::new();
    let lt = label.forward(&mut g, &batch.images)?;
    let lc = gradcam::compute(&mut g, &lt, &batch.labels, label.head())?;
    let ct = conf.forward(&mut g, &batch.images)?;
    let cc = gradcam::compute(&mut g, &ct, &batch.confounders, conf.head())?;

    for i in 0..batch.len() {
        for (model, cam) in [("label", &lc), ("conf", &cc)] {
            let map = cam.heatmap.export(&g, i);
            let path = out.join(gradcam::heatmap_file_name("test", i, model));
            gradcam::export_heatmap(&map, &path)?;
            println!(
                "{}: y={} c={} max {:.4} mean {:.4}",
                path.display(),
                batch.labels[i],
                batch.confounders[i],
                map.max(),
                map.sum() / map.len() as ex2l::Scalar
            );
        }
    }
    Ok(())
}
