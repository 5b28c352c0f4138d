//! Central-difference gradient checking against [`Graph::backward`].

use rand::seq::index::sample;

use crate::autodiff::{Graph, NodeId, Parameter};
use crate::error::Result;
use crate::rng::{self, Stream};
use crate::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct FdConfig {
    pub eps: Scalar,
    /// Coordinates checked per parameter; all of them when the parameter is smaller.
    pub per_param: usize,
    /// Lower bound on the relative-error denominator.
    pub floor: Scalar,
    pub seed: u64,
}

impl Default for FdConfig {
    fn default() -> Self {
        FdConfig {
            eps: 1e-5,
            per_param: 12,
            floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FdReport {
    pub max_rel_error: Scalar,
    pub checked: usize,
    /// `(parameter name, flat index)` of the worst coordinate.
    pub worst: Option<(String, usize)>,
}

impl FdReport {
    pub fn passes(&self, tol: Scalar) -> bool {
        self.max_rel_error < tol
    }
}

/// Compare analytic parameter gradients of the scalar built by `build`
/// against central differences on a random subsample of coordinates.
///
/// `build` must construct the loss from scratch on the given graph, reading
/// parameter values at call time. Gradient accumulators are zeroed before and
/// after the check.
pub fn finite_diff_check(
    params: &[Parameter],
    build: impl Fn(&mut Graph) -> Result<NodeId>,
    cfg: FdConfig,
) -> Result<FdReport> {
    compare_gradients(params, &build, &build, cfg)
}

/// Like [`finite_diff_check`], but differentiates `analytic` and takes
/// central differences of `numeric`. Used when the analytic graph holds some
/// quantity constant (such as detached Grad-CAM weights) that a plain rebuild
/// would recompute at every perturbed point.
pub fn compare_gradients(
    params: &[Parameter],
    analytic: impl Fn(&mut Graph) -> Result<NodeId>,
    numeric: impl Fn(&mut Graph) -> Result<NodeId>,
    cfg: FdConfig,
) -> Result<FdReport> {
    for p in params {
        p.zero_grad();
    }
    let mut g = Graph::new();
    let root = analytic(&mut g)?;
    g.backward(root)?;
    let grads: Vec<Vec<Scalar>> = params.iter().map(|p| p.grad().data().to_vec()).collect();
    for p in params {
        p.zero_grad();
    }

    let eval = |_: ()| -> Result<Scalar> {
        let mut g = Graph::new();
        let root = numeric(&mut g)?;
        g.value(root).item()
    };
    let mut rng = rng::stream(cfg.seed, Stream::GradCheck);
    let mut report = FdReport {
        max_rel_error: 0.0,
        checked: 0,
        worst: None,
    };
    for (p, grad) in params.iter().zip(&grads) {
        let n = p.len();
        let idx: Vec<usize> = if n <= cfg.per_param {
            (0..n).collect()
        } else {
            sample(&mut rng, n, cfg.per_param).into_vec()
        };
        for i in idx {
            let x0 = p.value().data()[i];
            p.set_element(i, x0 + cfg.eps);
            let up = eval(())?;
            p.set_element(i, x0 - cfg.eps);
            let down = eval(())?;
            p.set_element(i, x0);
            let fd = (up - down) / (2.0 * cfg.eps);
            let a = grad[i];
            let err = (a - fd).abs() / a.abs().max(fd.abs()).max(cfg.floor);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((p.name(), i));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use std::rc::Rc;

    use super::*;
    use crate::NdArray;

    #[test]
    fn quadratic_loss_is_exact_to_rounding() {
        let w = Parameter::new("w", NdArray::from_vec(vec![0.5, -1.5, 2.0]));
        let x = NdArray::from_vec(vec![1.0, 2.0, -0.5]);
        let rep = finite_diff_check(
            std::slice::from_ref(&w),
            |g| {
                let wn = g.param(&w);
                let xn = g.constant(x.clone());
                let p = g.mul(wn, xn);
                let s = g.add_scalar(p, -0.3);
                let q = g.square(s);
                Ok(g.sum_all(q))
            },
            FdConfig::default(),
        )
        .unwrap();
        assert_eq!(rep.checked, 3);
        assert!(rep.max_rel_error < 1e-9, "{rep:?}");
        assert!(w.grad().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn corrupted_backward_is_detected() {
        let w = Parameter::new("w", NdArray::from_vec(vec![0.5, -1.5, 2.0]));
        let rep = finite_diff_check(
            std::slice::from_ref(&w),
            |g| {
                let wn = g.param(&w);
                // forward is x², backward claims 3x
                let bad = g.custom_unary(
                    wn,
                    |v| v.map(|x| x * x),
                    Rc::new(|x, _, g| g.zip_map(x, |g, x| 3.0 * g * x)),
                );
                Ok(g.sum_all(bad))
            },
            FdConfig::default(),
        )
        .unwrap();
        assert!(rep.max_rel_error > 0.1, "{rep:?}");
    }
}
