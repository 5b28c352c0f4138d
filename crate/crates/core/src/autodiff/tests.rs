use std::rc::Rc;

use rand::Rng as _;

use super::*;
use crate::rng;
use crate::Scalar;

fn random(shape: &[usize], lo: Scalar, hi: Scalar, seed: u64) -> NdArray {
    let mut r = rng::indexed(seed, 0);
    let n = shape.iter().product();
    NdArray::new(
        shape.to_vec(),
        (0..n).map(|_| r.gen_range(lo..hi)).collect(),
    )
    .unwrap()
}

/// Compare backward against central differences for a scalar function of
/// one input array.
fn check_unary(x0: NdArray, build: impl Fn(&mut Graph, NodeId) -> NodeId) -> Scalar {
    let mut g = Graph::new();
    let x = g.variable(x0.clone());
    let out = build(&mut g, x);
    g.backward(out).unwrap();
    let analytic = g.grad(x).unwrap().clone();
    let eps = 1e-5;
    let mut worst: Scalar = 0.0;
    for i in 0..x0.len() {
        let eval = |delta: Scalar| {
            let mut xp = x0.clone();
            xp.data_mut()[i] += delta;
            let mut g = Graph::new();
            let x = g.constant(xp);
            let out = build(&mut g, x);
            g.value(out).item().unwrap()
        };
        let numeric = (eval(eps) - eval(-eps)) / (2.0 * eps);
        let a = analytic.data()[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(err);
    }
    worst
}

#[test]
fn linear_sum_gradient_is_the_input() {
    let mut g = Graph::new();
    let x = g.constant(NdArray::from_vec(vec![1.0, -2.0, 3.5]));
    let w = g.variable(NdArray::from_vec(vec![0.3, 0.1, -0.7]));
    let p = g.mul(w, x);
    let s = g.sum_all(p);
    g.backward(s).unwrap();
    assert_eq!(g.grad(w).unwrap().data(), &[1.0, -2.0, 3.5]);
    assert!(g.grad(x).is_none());
}

#[test]
fn dead_relu_passes_no_gradient() {
    let mut g = Graph::new();
    let p = g.variable(NdArray::scalar(0.8));
    let n = g.mul_scalar(p, -1.0);
    let r = g.relu(n);
    g.backward(r).unwrap();
    assert_eq!(g.grad(p).unwrap().data(), &[0.0]);
}

#[test]
fn backward_twice_doubles_accumulators() {
    let mut g = Graph::new();
    let x = g.variable(random(&[3, 4], -2.0, 2.0, 1));
    let param = Parameter::new("w", random(&[3, 4], -2.0, 2.0, 2));
    let w = g.param(&param);
    let m = g.mul(x, w);
    let sq = g.square(m);
    let s = g.sum_all(sq);
    g.backward(s).unwrap();
    let gx1 = g.grad(x).unwrap().clone();
    let gw1 = param.grad().clone();
    g.backward(s).unwrap();
    for (a, b) in g.grad(x).unwrap().data().iter().zip(gx1.data()) {
        assert_eq!(*a, 2.0 * b);
    }
    for (a, b) in param.grad().data().iter().zip(gw1.data()) {
        assert_eq!(*a, 2.0 * b);
    }
}

#[test]
fn grad_of_is_a_pure_query() {
    let mut g = Graph::new();
    let a = g.variable(random(&[2, 3], -2.0, 2.0, 3));
    let t = g.mul_scalar(a, 3.0);
    let s = g.sum_all(t);
    let before = g.len();
    let ga = g.grad_of(s, a).unwrap();
    assert_eq!(g.len(), before);
    assert!(g.grad(a).is_none());
    assert!(ga.data().iter().all(|&v| v == 3.0));
}

#[test]
fn grad_of_rejects_unreachable_targets() {
    let mut g = Graph::new();
    let a = g.variable(NdArray::scalar(1.0));
    let b = g.variable(NdArray::scalar(2.0));
    let s = g.mul_scalar(a, 2.0);
    assert!(matches!(g.grad_of(s, b), Err(crate::Error::Usage(_))));
}

#[test]
fn backward_requires_scalar_root() {
    let mut g = Graph::new();
    let a = g.variable(NdArray::from_vec(vec![1.0, 2.0]));
    let b = g.square(a);
    assert!(matches!(g.backward(b), Err(crate::Error::Usage(_))));
}

#[test]
fn elementwise_ops_match_finite_differences() {
    let x = random(&[2, 5], -2.0, 2.0, 10);
    let pos = random(&[2, 5], 0.5, 2.0, 11);
    let other = random(&[2, 5], 0.5, 2.0, 12);
    let tol = 1e-4;

    let o = other.clone();
    assert!(
        check_unary(x.clone(), move |g, x| {
            let c = g.constant(o.clone());
            let m = g.mul(x, c);
            let d = g.div(m, c);
            let e = g.div(c, d);
            let s = g.sub(e, x);
            let a = g.add(s, x);
            g.sum_all(a)
        }) < tol
    );
    assert!(
        check_unary(pos.clone(), |g, x| {
            let a = g.ln(x);
            let b = g.sqrt(x);
            let c = g.add(a, b);
            let d = g.signed_pow(c, 1.7);
            g.mean_all(d)
        }) < tol
    );
    assert!(
        check_unary(x.clone(), |g, x| {
            let a = g.abs(x);
            let b = g.square(x);
            let c = g.add(a, b);
            let r = g.relu(x);
            let d = g.mul(c, r);
            let e = g.add_scalar(d, 0.5);
            g.sum_all(e)
        }) < tol
    );
    assert!(
        check_unary(x.clone(), |g, x| {
            let r = g.sum_rows(x);
            let sq = g.square(r);
            let b = g.broadcast_rows(sq, &[2, 5]).unwrap();
            let m = g.mul(b, x);
            let rs = g.reshape(m, &[10]).unwrap();
            g.sum_all(rs)
        }) < tol
    );
    assert!(
        check_unary(x.clone(), |g, x| {
            let c = g.mul_const(x, NdArray::full(&[2, 5], -1.5)).unwrap();
            let q = g.square(c);
            let gathered = g.gather(q, &[4, 1]).unwrap();
            g.sum_all(gathered)
        }) < tol
    );
}

#[test]
fn losses_match_finite_differences() {
    let logits = random(&[6], -2.0, 2.0, 20);
    let targets = [1.0, 0.0, 0.0, 1.0, 1.0, 0.0];
    assert!(
        check_unary(logits, move |g, s| {
            let l = g.bce_with_logits_per_sample(s, &targets).unwrap();
            g.mean_all(l)
        }) < 1e-4
    );
    let logits = random(&[4, 3], -2.0, 2.0, 21);
    assert!(
        check_unary(logits, |g, s| {
            let l = g.cce_with_logits_per_sample(s, &[0, 2, 1, 2]).unwrap();
            g.mean_all(l)
        }) < 1e-4
    );
}

#[test]
fn layer_ops_match_finite_differences() {
    let input = random(&[2, 2, 6, 6], -2.0, 2.0, 30);
    let w = random(&[3, 2, 3, 3], -1.0, 1.0, 31);
    let b = random(&[3], -1.0, 1.0, 32);
    let dw = random(&[2, 27], -1.0, 1.0, 33);
    let db = random(&[2], -1.0, 1.0, 34);

    let build = |input: NdArray, w: NdArray| {
        let (b, dw, db) = (b.clone(), dw.clone(), db.clone());
        move |g: &mut Graph, x: NodeId, wid: Option<NodeId>| {
            let xin = g.constant(input.clone());
            let (xin, w) = match wid {
                Some(_) => (xin, x),
                None => (x, g.constant(w.clone())),
            };
            let bn = g.constant(b.clone());
            let c = g.conv2d(xin, w, bn, 1, 1).unwrap();
            let p = g.maxpool2(c).unwrap();
            let f = g.reshape(p, &[2, 27]).unwrap();
            let dwn = g.constant(dw.clone());
            let dbn = g.constant(db.clone());
            let y = g.dense(f, dwn, dbn).unwrap();
            let sq = g.square(y);
            g.sum_all(sq)
        }
    };
    let f = build(input.clone(), w.clone());
    assert!(check_unary(input.clone(), |g, x| f(g, x, None)) < 1e-4);
    let f = build(input, w.clone());
    assert!(check_unary(w, |g, x| f(g, x, Some(x))) < 1e-4);

    // strided conv, gradient w.r.t. the bias
    let input = random(&[1, 1, 7, 7], -2.0, 2.0, 35);
    let w = random(&[2, 1, 3, 3], -1.0, 1.0, 36);
    assert!(
        check_unary(random(&[2], -1.0, 1.0, 37), |g, bias| {
            let x = g.constant(input.clone());
            let wn = g.constant(w.clone());
            let c = g.conv2d(x, wn, bias, 0, 2).unwrap();
            let sq = g.square(c);
            g.sum_all(sq)
        }) < 1e-4
    );
}

#[test]
fn channel_weighted_sum_routes_gradient_to_activations_only() {
    let alpha = random(&[2, 3], -1.0, 1.0, 40);
    let act = random(&[2, 3, 2, 2], -2.0, 2.0, 41);
    assert!(
        check_unary(act, |g, a| {
            let h = g.channel_weighted_sum(a, alpha.clone()).unwrap();
            let sq = g.square(h);
            g.sum_all(sq)
        }) < 1e-4
    );
}

#[test]
fn custom_op_uses_its_backward_rule() {
    let mut g = Graph::new();
    let x = g.variable(NdArray::from_vec(vec![1.0, 2.0]));
    let back: BackwardFn = Rc::new(|_, _, g| g.map(|v| 10.0 * v));
    let y = g.custom_unary(x, |v| v.clone(), back);
    let s = g.sum_all(y);
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap().data(), &[10.0, 10.0]);
}
