#![cfg(not(feature = "single-precision"))]

use ex2l::data::{
    cmnist_from_digits, gen_cmnist_style, gen_from_group_table, load_mnist_idx, CmnistSpec,
    ColorSource, GroupTable,
};
use ex2l::metrics::{accuracy_report, linear_mmd, mmd_partition, LatentBatch};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn frac(n: usize, d: usize) -> f64 {
    n as f64 / d as f64
}

#[test]
fn cmnist_is_deterministic_and_well_formed() {
    let a = gen_cmnist_style(300, 0.8, 0.25, 9);
    let b = gen_cmnist_style(300, 0.8, 0.25, 9);
    assert_eq!(a, b);
    assert_ne!(a, gen_cmnist_style(300, 0.8, 0.25, 10));
    for i in 0..a.len() {
        let e = a.example(i);
        assert!(e.image.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(e.group, e.confounder * 2 + e.label);
    }
}

#[test]
fn color_agreement_follows_the_environment() {
    // agreement with the noisy label is e; with the clean digit label it is
    // e(1-f) + (1-e)f
    let n = 20_000;
    for (e, flip) in [(0.9, 0.25), (0.1, 0.25), (0.8, 0.0)] {
        let d = gen_cmnist_style(n, e, flip, 3);
        let agree = (0..n)
            .filter(|&i| d.labels()[i] == d.confounders()[i])
            .count();
        let p = frac(agree, n);
        assert!(
            (p - e).abs() < 4.0 * (e * (1.0 - e) / n as f64).sqrt() + 1e-9,
            "e={e}: {p}"
        );
    }
    let spec = CmnistSpec {
        train_envs: vec![0.9],
        flip: 0.25,
        n_train: n,
        color_source: ColorSource::BaseLabel,
        ..CmnistSpec::default()
    };
    let d = spec.train();
    let agree = (0..n)
        .filter(|&i| d.labels()[i] == d.confounders()[i])
        .count();
    let want = 0.9 * 0.75 + 0.1 * 0.25;
    assert!((frac(agree, n) - want).abs() < 0.015, "{}", frac(agree, n));
}

#[test]
fn splits_use_their_own_environments() {
    let spec = CmnistSpec {
        n_train: 100,
        n_val: 50,
        n_test: 40,
        ..CmnistSpec::default()
    };
    let (tr, va, te) = (spec.train(), spec.val(), spec.test());
    assert_eq!(tr.envs().iter().filter(|&&e| e == 0).count(), 50);
    assert_eq!(tr.envs().iter().filter(|&&e| e == 1).count(), 50);
    assert!(va.envs().iter().all(|&e| e < 2));
    assert!(te.envs().iter().all(|&e| e == 2));
    assert_ne!(tr.image(0), va.image(0));
}

#[test]
fn group_table_proportions_are_reproduced() {
    let t = GroupTable::from_records(&[
        ("e0", "water", "landbird", 0.05),
        ("e0", "land", "landbird", 0.45),
        ("e0", "water", "waterbird", 0.45),
        ("e0", "land", "waterbird", 0.05),
    ])
    .unwrap();
    let n = 20_000;
    let d = gen_from_group_table(&t, n, 1);
    let counts = d.group_counts();
    let coding = d.coding();
    for r in &t.envs[0].rows {
        let g = coding.encode(r.confounder, r.label);
        let p = frac(counts[g], n);
        let sd = (r.proportion * (1.0 - r.proportion) / n as f64).sqrt();
        assert!((p - r.proportion).abs() < 4.0 * sd, "group {g}: {p}");
    }
}

#[test]
fn group_table_rejects_bad_sums() {
    let bad = GroupTable::from_records(&[("e", "a", "x", 0.7), ("e", "b", "y", 0.7)]);
    assert!(matches!(bad, Err(ex2l::Error::Data(_))));
}

#[test]
fn idx_files_load_and_colorize() {
    let dir = tempfile::tempdir().unwrap();
    let mut img = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 28, 0, 0, 0, 28];
    img.extend((0..2 * 784).map(|i| (i % 256) as u8));
    let lab = vec![0, 0, 8, 1, 0, 0, 0, 2, 7, 2];
    std::fs::write(dir.path().join("img"), &img).unwrap();
    std::fs::write(dir.path().join("lab"), &lab).unwrap();
    let raw = load_mnist_idx(&dir.path().join("img"), &dir.path().join("lab")).unwrap();
    assert_eq!(raw.len(), 2);
    assert_eq!(raw.labels, vec![7, 2]);
    assert_eq!(raw.image(0)[255], 1.0);
    let d = cmnist_from_digits(&raw, 0.9, 0.25, ColorSource::NoisyLabel, 0, 4).unwrap();
    assert_eq!(d.len(), 2);
    std::fs::write(dir.path().join("lab"), &lab[..9]).unwrap();
    assert!(load_mnist_idx(&dir.path().join("img"), &dir.path().join("lab")).is_err());
}

fn brute_wga(preds: &[usize], labels: &[usize], groups: &[usize], k: usize) -> f64 {
    (0..k)
        .filter_map(|g| {
            let idx: Vec<usize> = (0..preds.len()).filter(|&i| groups[i] == g).collect();
            (!idx.is_empty()).then(|| {
                frac(
                    idx.iter().filter(|&&i| preds[i] == labels[i]).count(),
                    idx.len(),
                )
            })
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn accuracy_example() {
    let r = accuracy_report(&[1, 1, 0, 1], &[1, 1, 1, 1], &[0, 0, 0, 1], 2).unwrap();
    assert_eq!(r.aa, 0.75);
    assert!((r.wga - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(r.group_acc, vec![Some(2.0 / 3.0), Some(1.0)]);
}

#[test]
fn gaussian_mean_gap_is_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (n, d) = (10_000, 4);
    let gap = [1.0, -0.5, 0.0, 0.25];
    let draw = |rng: &mut ChaCha8Rng, shift: bool| -> LatentBatch {
        let data = (0..n * d)
            .map(|i| {
                let z: f64 = StandardNormal.sample(rng);
                z + if shift { gap[i % d] } else { 0.0 }
            })
            .collect();
        LatentBatch::new(d, data).unwrap()
    };
    let (a, b) = (draw(&mut rng, false), draw(&mut rng, true));
    let want: f64 = gap.iter().map(|g| g * g).sum();
    let got = linear_mmd(&a, &b, false).unwrap();
    assert!((got - want).abs() / want < 0.05, "{got} vs {want}");
    assert!((linear_mmd(&a, &b, true).unwrap() - got / d as f64).abs() < 1e-15);
}

#[test]
fn label_clusters_dominate_confounder_split() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 2000;
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let confs: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
    let data: Vec<f64> = labels
        .iter()
        .flat_map(|&y| {
            let z: f64 = StandardNormal.sample(&mut rng);
            let w: f64 = StandardNormal.sample(&mut rng);
            [z + 3.0 * y as f64, w]
        })
        .collect();
    let lat = LatentBatch::new(2, data).unwrap();
    let my = mmd_partition(&lat, &labels, false).unwrap();
    let mc = mmd_partition(&lat, &confs, false).unwrap();
    assert!(my > 50.0 * mc, "{my} vs {mc}");
    let mut shuffled = labels.clone();
    shuffled.shuffle(&mut rng);
    assert!(mmd_partition(&lat, &shuffled, false).unwrap() < 0.05 * my);
}

proptest! {
    #[test]
    fn wga_matches_enumeration(
        rows in prop::collection::vec((0usize..2, 0usize..2, 0usize..4), 1..60)
    ) {
        let preds: Vec<usize> = rows.iter().map(|r| r.0).collect();
        let labels: Vec<usize> = rows.iter().map(|r| r.1).collect();
        let groups: Vec<usize> = rows.iter().map(|r| r.2).collect();
        let r = accuracy_report(&preds, &labels, &groups, 4).unwrap();
        prop_assert_eq!(r.wga, brute_wga(&preds, &labels, &groups, 4));
        let present: Vec<f64> = r.group_acc.iter().flatten().cloned().collect();
        prop_assert_eq!(r.wga, present.iter().cloned().fold(f64::INFINITY, f64::min));

        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.reverse();
        let p2: Vec<usize> = order.iter().map(|&i| preds[i]).collect();
        let l2: Vec<usize> = order.iter().map(|&i| labels[i]).collect();
        let g2: Vec<usize> = order.iter().map(|&i| groups[i]).collect();
        let r2 = accuracy_report(&p2, &l2, &g2, 4).unwrap();
        prop_assert_eq!(r.aa, r2.aa);
        prop_assert_eq!(r.wga, r2.wga);
    }

    #[test]
    fn mmd_is_symmetric_and_non_negative(
        a in prop::collection::vec(-5.0..5.0f64, 3..30),
        b in prop::collection::vec(-5.0..5.0f64, 3..30),
    ) {
        let la = LatentBatch::new(1, a).unwrap();
        let lb = LatentBatch::new(1, b).unwrap();
        let ab = linear_mmd(&la, &lb, false).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, linear_mmd(&lb, &la, false).unwrap());
        prop_assert!(linear_mmd(&la, &la.clone(), false).unwrap() <= 1e-12);
    }
}
