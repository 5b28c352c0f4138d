//! Reverse-mode gradients on a tiny expression, then a finite-difference
//! check of the default CNN's loss.
//!
//!     cargo run --release --example autodiff_gradcheck

use ex2l::data::gen_cmnist_style;
use ex2l::gradcheck::{finite_diff_check, FdConfig};
use ex2l::rng::{self, Stream};
use ex2l::{loss, Graph, HeadKind, NdArray, Network};

fn main() -> anyhow::Result<()> {
    // f(x) = sum(relu(x) * x), so df/dx = 2x for x > 0 and 0 otherwise
    let mut g = Graph::new();
    let x = g.variable(NdArray::new(vec![4], vec![-1.0, 0.5, 2.0, 3.0])?);
    let r = g.relu(x);
    let p = g.mul(r, x);
    let f = g.sum_all(p);
    println!("f = {}", g.value(f).data()[0]);
    // grad_of leaves the graph and its grad slots untouched
    println!("df/dx via grad_of  = {:?}", g.grad_of(f, x)?.data());
    g.backward(f)?;
    println!(
        "df/dx via backward = {:?}",
        g.grad(x).expect("x is a variable").data()
    );

    let data = gen_cmnist_style(16, 0.9, 0.25, 0);
    let batch = data.batch(&(0..16).collect::<Vec<_>>());
    let net = Network::default_cnn(
        data.image_shape(),
        HeadKind::Binary,
        &mut rng::stream(0, Stream::LabelInit),
    )?;
    println!("\ndefault CNN: {} parameters", net.num_parameters());
    let build = |g: &mut Graph| {
        let t = net.forward(g, &batch.images)?;
        loss::mean(g, t.logits, net.head(), &batch.labels)
    };
    let cfg = FdConfig {
        eps: 1e-6,
        ..FdConfig::default()
    };
    // with zero biases every blank pixel sits exactly on a ReLU kink, where
    // central differences are meaningless
    let rep = finite_diff_check(&net.params(), build, cfg)?;
    println!(
        "zero biases: {} coordinates, max rel error {:.2e} (worst {:?})",
        rep.checked, rep.max_rel_error, rep.worst
    );
    for p in net.params().iter().filter(|p| p.name().ends_with("bias")) {
        let mut v = p.value().clone();
        v.data_mut().iter_mut().for_each(|x| *x = 0.1);
        p.set_value(v);
    }
    let rep = finite_diff_check(&net.params(), build, cfg)?;
    println!(
        "biases 0.1:  {} coordinates, max rel error {:.2e} (worst {:?})",
        rep.checked, rep.max_rel_error, rep.worst
    );
    Ok(())
}
