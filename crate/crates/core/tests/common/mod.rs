//! Fixtures and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use ex2l::data::{gen_cmnist_style, Batch, GroupCoding, Sampler, SamplingKind};
use ex2l::gradcam::{self, CamWeights};
use ex2l::gradcheck::{compare_gradients, finite_diff_check, FdConfig, FdReport};
use ex2l::loss;
use ex2l::nn::HeadKind;
use ex2l::rng::{self, Stream};
use ex2l::similarity::{Similarity, SimilarityKind};
use ex2l::train::{Algorithm, TrainConfig, Trainer};
use ex2l::{Graph, LayerSpec, NdArray, Network, NodeId, Parameter, Result};

pub const BINARY: GroupCoding = GroupCoding {
    n_labels: 2,
    n_confounders: 2,
};

/// Straightforward re-derivations of each similarity score on flat maps.
pub mod oracle {
    use super::SimilarityKind;

    pub const EPS: f64 = 1e-8;

    fn normalize(v: &[f64]) -> Vec<f64> {
        let n = v.len() as f64;
        let total: f64 = v.iter().sum();
        v.iter().map(|x| (x + EPS / n) / (total + EPS)).collect()
    }

    fn kl(p: &[f64], q: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..p.len() {
            s += p[i] * ((p[i] + EPS) / (q[i] + EPS)).ln();
        }
        s
    }

    pub fn js(p: &[f64], q: &[f64]) -> f64 {
        let m: Vec<f64> = (0..p.len()).map(|i| (p[i] + q[i]) / 2.0).collect();
        (kl(p, &m) + kl(q, &m)) / 2.0
    }

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..a.len() {
            s += a[i] * b[i];
        }
        s
    }

    pub fn score(kind: SimilarityKind, a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        match kind {
            SimilarityKind::NegMae => -a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / n,
            SimilarityKind::NegMse => {
                -a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n
            }
            SimilarityKind::NegRmse => {
                -(a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n).sqrt()
            }
            SimilarityKind::SoftIou => {
                let inter = dot(a, b);
                let union: f64 = a.iter().zip(b).map(|(x, y)| x + y - x * y).sum();
                inter / (union + EPS)
            }
            SimilarityKind::SoftDice => {
                2.0 * dot(a, b) / (a.iter().sum::<f64>() + b.iter().sum::<f64>() + EPS)
            }
            // reference distribution is the confounder map (second argument)
            SimilarityKind::NegKl => -kl(&normalize(b), &normalize(a)),
            SimilarityKind::NegJsDiv => -js(&normalize(b), &normalize(a)),
            SimilarityKind::NegJsd => -js(&normalize(b), &normalize(a)).max(0.0).sqrt(),
            SimilarityKind::Cosine => {
                let (p, q) = (normalize(a), normalize(b));
                dot(&p, &q) / (dot(&p, &p).sqrt() * dot(&q, &q).sqrt() + EPS)
            }
            SimilarityKind::Ncc => {
                let (ma, mb) = (mean(a), mean(b));
                let ca: Vec<f64> = a.iter().map(|x| x - ma).collect();
                let cb: Vec<f64> = b.iter().map(|x| x - mb).collect();
                dot(&ca, &cb) / (dot(&ca, &ca).sqrt() * dot(&cb, &cb).sqrt() + EPS)
            }
            SimilarityKind::Ssim => {
                let range = a
                    .iter()
                    .chain(b)
                    .cloned()
                    .fold(f64::NEG_INFINITY, f64::max)
                    .max(1e-8);
                let c1 = (0.01 * range).powi(2);
                let c2 = (0.03 * range).powi(2);
                let c3 = c2 / 2.0;
                let (ma, mb) = (mean(a), mean(b));
                let mut va = 0.0;
                let mut vb = 0.0;
                let mut cov = 0.0;
                for i in 0..a.len() {
                    va += (a[i] - ma).powi(2);
                    vb += (b[i] - mb).powi(2);
                    cov += (a[i] - ma) * (b[i] - mb);
                }
                let dof = n - 1.0;
                let (va, vb, cov) = (va / dof, vb / dof, cov / dof);
                let (sa, sb) = (va.sqrt(), vb.sqrt());
                let l = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
                let c = (2.0 * sa * sb + c2) / (va + vb + c2);
                let s = (cov + c3) / (sa * sb + c3);
                l * c * s
            }
        }
    }
}

pub fn score(kind: SimilarityKind, a: &[f64], b: &[f64], shape: [usize; 2]) -> f64 {
    let a = ex2l::NdArray::new(shape.to_vec(), a.to_vec()).unwrap();
    let b = ex2l::NdArray::new(shape.to_vec(), b.to_vec()).unwrap();
    Similarity::new(kind).evaluate_arrays(&a, &b).unwrap()
}

/// conv(3→4) → relu → pool → conv(4→4) → relu → pool → flatten → dense,
/// capturing the second relu.
pub fn small_cnn(outputs: usize, seed: u64, stream: Stream) -> Network {
    let layers = vec![
        LayerSpec::Conv2d {
            in_ch: 3,
            out_ch: 4,
            kernel: 3,
            padding: 1,
            stride: 1,
        },
        LayerSpec::Relu,
        LayerSpec::MaxPool2,
        LayerSpec::Conv2d {
            in_ch: 4,
            out_ch: 4,
            kernel: 3,
            padding: 1,
            stride: 1,
        },
        LayerSpec::Relu,
        LayerSpec::MaxPool2,
        LayerSpec::Flatten,
        LayerSpec::Dense {
            in_features: 4 * 7 * 7,
            out_features: outputs,
        },
    ];
    Network::new([3, 28, 28], layers, 4, &mut rng::stream(seed, stream)).unwrap()
}

/// Fresh networks start with zero biases, which puts every blank pixel
/// exactly on a ReLU kink. Finite differences need to stay off kinks.
pub fn jitter_biases(net: &Network, seed: u64) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for p in net.params().iter().filter(|p| p.name().ends_with("bias")) {
        let mut v = p.value().clone();
        for x in v.data_mut() {
            *x = rng.gen_range(0.05..0.15) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        }
        p.set_value(v);
    }
}

/// Small networks with jittered biases, for gradient checks.
pub fn small_trainer(cfg: TrainConfig) -> Trainer {
    let label = small_cnn(1, cfg.seed, Stream::LabelInit);
    jitter_biases(&label, cfg.seed);
    let conf = (cfg.algorithm == Algorithm::Ex2l).then(|| {
        let c = small_cnn(1, cfg.seed, Stream::ConfounderInit);
        jitter_biases(&c, cfg.seed + 1);
        c
    });
    Trainer::with_networks(cfg, BINARY, label, conf).unwrap()
}

/// First `n` examples of a synthetic colored-digit set.
pub fn cmnist_batch(n: usize, seed: u64) -> Batch {
    let d = gen_cmnist_style(n, 0.9, 0.25, seed);
    d.batch(&(0..n).collect::<Vec<_>>())
}

pub fn trainer_params(t: &Trainer) -> Vec<Parameter> {
    let mut p = t.label_net().params();
    if let Some(c) = t.conf_net() {
        p.extend(c.params());
    }
    p
}

/// The eX2L objective rebuilt from its parts with the Grad-CAM weights held
/// at the values they take for the current parameters. Mirrors the detached
/// weights of the analytic graph.
pub fn frozen_ex2l_objective<'a>(
    t: &'a Trainer,
    batch: &Batch,
) -> impl Fn(&mut Graph) -> Result<NodeId> + 'a {
    let label = t.label_net();
    let conf = t.conf_net().expect("ex2l trainer");
    let weights = {
        let mut g = Graph::new();
        let ty = label.forward(&mut g, &batch.images).unwrap();
        let tc = conf.forward(&mut g, &batch.images).unwrap();
        let wy = gradcam::compute(&mut g, &ty, &batch.labels, label.head())
            .unwrap()
            .weights;
        let wc = gradcam::compute(&mut g, &tc, &batch.confounders, conf.head())
            .unwrap()
            .weights;
        (wy, wc)
    };
    let cfg = t.config().clone();
    let batch = batch.clone();
    move |g: &mut Graph| {
        let ty = label.forward(g, &batch.images)?;
        let per = loss::per_sample(g, ty.logits, label.head(), &batch.labels)?;
        let ly = g.mean_all(per);
        let tc = conf.forward(g, &batch.images)?;
        let lc = loss::mean(g, tc.logits, conf.head(), &batch.confounders)?;
        let hy = gradcam::heatmap(g, ty.activation, &weights.0)?;
        let hc = gradcam::heatmap(g, tc.activation, &weights.1)?;
        let sim = cfg.similarity.evaluate(g, hy.node, hc.node)?;
        let wc = g.mul_scalar(lc, cfg.lambda_c);
        let ws = g.mul_scalar(sim, cfg.lambda_sim);
        let task = g.add(ly, wc);
        Ok(g.add(task, ws))
    }
}

pub fn fd_config() -> FdConfig {
    FdConfig {
        eps: 1e-6,
        per_param: 8,
        ..FdConfig::default()
    }
}

/// Finite-difference check of the trainer's full objective on one batch.
pub fn check_objective(t: &Trainer, batch: &Batch) -> Result<FdReport> {
    let analytic = |g: &mut Graph| t.objective(g, batch).map(|o| o.total);
    if t.config().algorithm == Algorithm::Ex2l {
        compare_gradients(
            &trainer_params(t),
            analytic,
            frozen_ex2l_objective(t, batch),
            fd_config(),
        )
    } else {
        finite_diff_check(&trainer_params(t), analytic, fd_config())
    }
}

/// A network whose capture layer is a relu of the input, so the activation
/// gradient can be checked by perturbing positive inputs.
fn input_capture_net(seed: u64) -> Network {
    let layers = vec![
        LayerSpec::Relu,
        LayerSpec::Conv2d {
            in_ch: 3,
            out_ch: 4,
            kernel: 3,
            padding: 1,
            stride: 1,
        },
        LayerSpec::Relu,
        LayerSpec::MaxPool2,
        LayerSpec::Flatten,
        LayerSpec::Dense {
            in_features: 4 * 3 * 3,
            out_features: 3,
        },
    ];
    Network::new(
        [3, 6, 6],
        layers,
        0,
        &mut rng::stream(seed, Stream::LabelInit),
    )
    .unwrap()
}

fn positive_input(n: usize, seed: u64) -> NdArray {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * 3 * 36).map(|_| 0.2 + rng.gen::<f64>()).collect();
    NdArray::new(vec![n, 3, 6, 6], data).unwrap()
}

/// Largest relative error between Grad-CAM channel weights and the
/// pixel-averaged central differences of the target score.
pub fn cam_weight_fd_error() -> f64 {
    let net = input_capture_net(5);
    let x = positive_input(2, 9);
    let targets = [2usize, 0];
    let head = HeadKind::Multiclass(3);
    let mut g = Graph::new();
    let trace = net.forward(&mut g, &x).unwrap();
    let cam = gradcam::compute(&mut g, &trace, &targets, head).unwrap();

    let score = |x: &NdArray, b: usize| -> f64 {
        let mut g = Graph::new();
        let t = net.forward(&mut g, x).unwrap();
        let s = gradcam::target_logit(&mut g, t.logits, &targets, head).unwrap();
        g.value(s).data()[b]
    };
    let eps = 1e-5;
    let mut worst = 0.0f64;
    for b in 0..2 {
        for k in 0..3 {
            let mut total = 0.0;
            for p in 0..36 {
                let i = ((b * 3) + k) * 36 + p;
                let mut up = x.clone();
                up.data_mut()[i] += eps;
                let mut down = x.clone();
                down.data_mut()[i] -= eps;
                total += (score(&up, b) - score(&down, b)) / (2.0 * eps);
            }
            let numeric = total / 36.0;
            let analytic = cam.weights.alpha.data()[b * 3 + k];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}

/// Gradients of a label-vs-confounder similarity loss on the label
/// network's parameters, with the heatmap built by `heatmap`.
pub fn sim_param_grads(
    heatmap: impl Fn(&mut Graph, NodeId, &CamWeights) -> Result<NodeId>,
    frozen_alpha: Option<NdArray>,
) -> Vec<Vec<f64>> {
    let label = small_cnn(1, 8, Stream::LabelInit);
    let conf = small_cnn(1, 8, Stream::ConfounderInit);
    let batch = cmnist_batch(6, 7);
    let params: Vec<Parameter> = label.params();
    for p in &params {
        p.zero_grad();
    }
    let mut g = Graph::new();
    let ty = label.forward(&mut g, &batch.images).unwrap();
    let tc = conf.forward(&mut g, &batch.images).unwrap();
    let sy = gradcam::target_logit(&mut g, ty.logits, &batch.labels, HeadKind::Binary).unwrap();
    let wy = match frozen_alpha {
        Some(alpha) => CamWeights { alpha },
        None => gradcam::cam_weights(&mut g, ty.activation, sy).unwrap(),
    };
    let hy = heatmap(&mut g, ty.activation, &wy).unwrap();
    let hc = gradcam::compute(&mut g, &tc, &batch.confounders, HeadKind::Binary).unwrap();
    let loss = Similarity::new(SimilarityKind::NegMse)
        .evaluate(&mut g, hy, hc.heatmap.node)
        .unwrap();
    g.backward(loss).unwrap();
    params.iter().map(|p| p.grad().data().to_vec()).collect()
}

pub fn standard_heatmap(g: &mut Graph, act: NodeId, w: &CamWeights) -> Result<NodeId> {
    Ok(gradcam::heatmap(g, act, w)?.node)
}

pub fn detached_activation_heatmap(g: &mut Graph, act: NodeId, w: &CamWeights) -> Result<NodeId> {
    let cut = g.detach(act);
    Ok(gradcam::heatmap(g, cut, w)?.node)
}

/// The label model's channel weights for the `sim_param_grads` batch,
/// computed on a separate graph and returned as plain numbers.
pub fn frozen_alpha() -> NdArray {
    let label = small_cnn(1, 8, Stream::LabelInit);
    let batch = cmnist_batch(6, 7);
    let mut g = Graph::new();
    let t = label.forward(&mut g, &batch.images).unwrap();
    let s = gradcam::target_logit(&mut g, t.logits, &batch.labels, HeadKind::Binary).unwrap();
    gradcam::cam_weights(&mut g, t.activation, s).unwrap().alpha
}

fn bits(values: &[NdArray]) -> Vec<u64> {
    values
        .iter()
        .flat_map(|v| v.data().iter().map(|x| x.to_bits()))
        .collect()
}

/// Train ERM and eX2L with both penalties at zero from the same seed; the
/// first step at which label parameters differ in any bit, if any.
pub fn reduction_divergence(steps: usize) -> Option<usize> {
    let data = gen_cmnist_style(512, 0.9, 0.25, 4);
    let base = TrainConfig {
        batch_size: 32,
        seed: 17,
        ..TrainConfig::default()
    };
    let mut erm = Trainer::new(base.clone(), data.image_shape(), data.coding()).unwrap();
    let ex2l_cfg = TrainConfig {
        algorithm: Algorithm::Ex2l,
        lambda_c: 0.0,
        lambda_sim: 0.0,
        ..base.clone()
    };
    let mut ex2l = Trainer::new(ex2l_cfg, data.image_shape(), data.coding()).unwrap();
    let mut s1 = Sampler::new(base.sampling, &data, base.batch_size, base.seed).unwrap();
    let mut s2 = Sampler::new(base.sampling, &data, base.batch_size, base.seed).unwrap();
    if bits(&erm.label_net().snapshot()) != bits(&ex2l.label_net().snapshot()) {
        return Some(0);
    }
    for step in 1..=steps {
        erm.step(&data.batch(&s1.next_batch())).unwrap();
        ex2l.step(&data.batch(&s2.next_batch())).unwrap();
        if bits(&erm.label_net().snapshot()) != bits(&ex2l.label_net().snapshot()) {
            return Some(step);
        }
    }
    None
}

/// Group frequencies of 10⁴ uniform-group draws over four groups whose
/// sizes span a 100:1 ratio.
pub fn uniform_group_frequencies() -> [f64; 4] {
    let mut groups = vec![0; 1000];
    groups.extend(vec![1; 10]);
    groups.extend(vec![2; 300]);
    groups.extend(vec![3; 10]);
    let mut s = Sampler::from_groups(SamplingKind::UniformGroup, &groups, 100, 5).unwrap();
    let mut counts = [0usize; 4];
    for _ in 0..100 {
        for i in s.next_batch() {
            counts[groups[i]] += 1;
        }
    }
    counts.map(|c| c as f64 / 10_000.0)
}
