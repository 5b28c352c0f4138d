#![cfg(not(feature = "single-precision"))]

mod common;

use common::{oracle, score};
use ex2l::gradcheck::{finite_diff_check, FdConfig};
use ex2l::similarity::{l1_normalize, Similarity, SimilarityKind};
use ex2l::{Graph, NdArray, Parameter};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const S4: [usize; 2] = [4, 4];

fn map16() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, 16)
}

fn binary16() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop::bool::ANY, 16)
        .prop_filter("non-empty support", |v| v.iter().any(|&b| b))
        .prop_map(|v| v.into_iter().map(|b| if b { 1.0 } else { 0.0 }).collect())
}

#[test]
fn matches_oracle_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let a: Vec<f64> = (0..16).map(|_| rng.gen::<f64>()).collect();
        let b: Vec<f64> = (0..16).map(|_| rng.gen::<f64>()).collect();
        for kind in SimilarityKind::ALL {
            let err = (score(kind, &a, &b, S4) - oracle::score(kind, &a, &b)).abs();
            assert!(err < 1e-10, "{kind}: {err}");
            worst = worst.max(err);
        }
    }
    assert!(worst < 1e-10);
}

#[test]
fn oracle_agrees_on_sparse_maps() {
    // exact zeros exercise the epsilon terms
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let mut draw = || -> Vec<f64> {
            (0..16)
                .map(|_| {
                    if rng.gen_bool(0.5) {
                        0.0
                    } else {
                        rng.gen::<f64>() * 3.0
                    }
                })
                .collect()
        };
        let (a, b) = (draw(), draw());
        for kind in SimilarityKind::ALL {
            let err = (score(kind, &a, &b, S4) - oracle::score(kind, &a, &b)).abs();
            assert!(err < 1e-10, "{kind}: {err}");
        }
    }
}

#[test]
fn documented_examples() {
    let a = [1.0, 1.0, 0.0, 0.0];
    let b = [1.0, 0.0, 1.0, 0.0];
    let s2 = [2, 2];
    assert!((score(SimilarityKind::SoftDice, &a, &b, s2) - 0.5).abs() < 1e-8);
    assert!((score(SimilarityKind::NegMae, &a, &b, s2) + 0.5).abs() < 1e-15);
    assert!((score(SimilarityKind::Cosine, &a, &b, s2) - 0.5).abs() < 1e-7);
    let up = [0.0, 1.0, 2.0, 3.0];
    let down = [3.0, 2.0, 1.0, 0.0];
    assert!((score(SimilarityKind::Ncc, &up, &down, s2) + 1.0).abs() < 1e-8);
    let n = l1_normalize(
        &NdArray::new(vec![2, 2], vec![3.0, 1.0, 0.0, 0.0]).unwrap(),
        1e-8,
    );
    assert!((n.data()[0] - 0.75).abs() < 1e-8 && (n.data()[1] - 0.25).abs() < 1e-8);
}

#[test]
fn js_divergence_breaks_the_triangle_inequality() {
    let p = [1.0, 0.0];
    let q = [0.5, 0.5];
    let r = [0.0, 1.0];
    let s = [1, 2];
    let div = |x: &[f64], y: &[f64]| -score(SimilarityKind::NegJsDiv, x, y, s);
    let dist = |x: &[f64], y: &[f64]| -score(SimilarityKind::NegJsd, x, y, s);
    assert!(div(&p, &r) > div(&p, &q) + div(&q, &r) + 1e-3);
    assert!(dist(&p, &r) <= dist(&p, &q) + dist(&q, &r) + 1e-9);
    assert!((div(&p, &r) - std::f64::consts::LN_2).abs() < 1e-6);
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    // values kept away from zero and from each other so no kink is crossed
    let vals =
        |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..32).map(|_| 0.1 + rng.gen::<f64>()).collect() };
    for kind in SimilarityKind::ALL {
        let a = Parameter::new("a", NdArray::new(vec![2, 4, 4], vals(&mut rng)).unwrap());
        let b = Parameter::new("b", NdArray::new(vec![2, 4, 4], vals(&mut rng)).unwrap());
        let sim = Similarity::new(kind);
        let rep = finite_diff_check(
            &[a.clone(), b.clone()],
            |g: &mut Graph| {
                let (x, y) = (g.param(&a), g.param(&b));
                sim.evaluate(g, x, y)
            },
            FdConfig {
                per_param: 32,
                ..FdConfig::default()
            },
        )
        .unwrap();
        assert!(rep.passes(1e-4), "{kind}: {:?}", rep);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn identity_is_maximal(a in map16(), b in map16()) {
        for kind in SimilarityKind::ALL {
            if matches!(kind, SimilarityKind::SoftDice | SimilarityKind::SoftIou) {
                continue;
            }
            let same = score(kind, &a, &a, S4);
            let other = score(kind, &a, &b, S4);
            prop_assert!(same >= other - 1e-9, "{}: {} < {}", kind, same, other);
        }
    }

    #[test]
    fn overlap_scores_peak_at_a_binary_reference(a in binary16(), b in map16()) {
        for kind in [SimilarityKind::SoftDice, SimilarityKind::SoftIou] {
            let same = score(kind, &a, &a, S4);
            let other = score(kind, &a, &b, S4);
            prop_assert!(same >= other - 1e-9, "{}: {} < {}", kind, same, other);
            prop_assert!((same - 1.0).abs() < 1e-7);
        }
    }

    #[test]
    fn symmetric_kinds(a in map16(), b in map16()) {
        for kind in SimilarityKind::ALL.into_iter().filter(|k| k.is_symmetric()) {
            let d = (score(kind, &a, &b, S4) - score(kind, &b, &a, S4)).abs();
            prop_assert!(d <= 1e-12, "{}: {}", kind, d);
        }
    }

    #[test]
    fn bounds(a in map16(), b in map16()) {
        let s = |k| score(k, &a, &b, S4);
        let cos = s(SimilarityKind::Cosine);
        prop_assert!((0.0..=1.0).contains(&cos));
        for k in [SimilarityKind::SoftDice, SimilarityKind::SoftIou] {
            prop_assert!((0.0..=1.0).contains(&s(k)), "{}", k);
        }
        prop_assert!((-1.0..=1.0).contains(&s(SimilarityKind::Ncc)));
        let jsd = s(SimilarityKind::NegJsd);
        prop_assert!(jsd <= 0.0 && jsd >= -(std::f64::consts::LN_2.sqrt()) - 1e-12);
        for k in [SimilarityKind::NegMae, SimilarityKind::NegMse, SimilarityKind::NegRmse] {
            prop_assert!(s(k) <= 0.0);
        }
    }

    #[test]
    fn jsd_is_a_metric_on_random_triples(a in map16(), b in map16(), c in map16()) {
        let d = |x: &[f64], y: &[f64]| -score(SimilarityKind::NegJsd, x, y, S4);
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-9);
    }

    #[test]
    fn normalized_maps_sum_to_one(a in map16()) {
        let n = l1_normalize(&NdArray::new(vec![4, 4], a).unwrap(), 1e-8);
        prop_assert!((n.sum() - 1.0).abs() < 1e-9);
        prop_assert!(n.data().iter().all(|&v| v >= 0.0));
    }
}
