//! Classification losses on top of the graph's per-sample loss nodes.

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::nn::HeadKind;
use crate::Scalar;

/// Mean binary cross-entropy over a batch of logits (`[B]` or `[B, 1]`).
pub fn bce_with_logits(g: &mut Graph, logits: NodeId, targets: &[Scalar]) -> Result<NodeId> {
    let l = g.bce_with_logits_per_sample(logits, targets)?;
    Ok(g.mean_all(l))
}

/// Mean categorical cross-entropy over `[B, K]` logits.
pub fn cce_with_logits(g: &mut Graph, logits: NodeId, targets: &[usize]) -> Result<NodeId> {
    let l = g.cce_with_logits_per_sample(logits, targets)?;
    Ok(g.mean_all(l))
}

/// Per-sample loss `[B]` for the given head, BCE for binary and CCE otherwise.
pub fn per_sample(
    g: &mut Graph,
    logits: NodeId,
    head: HeadKind,
    targets: &[usize],
) -> Result<NodeId> {
    match head {
        HeadKind::Binary => {
            if let Some(bad) = targets.iter().find(|&&t| t > 1) {
                return Err(Error::data(format!("binary target {bad} is not 0 or 1")));
            }
            let t: Vec<Scalar> = targets.iter().map(|&t| t as Scalar).collect();
            g.bce_with_logits_per_sample(logits, &t)
        }
        HeadKind::Multiclass(_) => g.cce_with_logits_per_sample(logits, targets),
    }
}

/// Mean loss for the given head.
pub fn mean(g: &mut Graph, logits: NodeId, head: HeadKind, targets: &[usize]) -> Result<NodeId> {
    let l = per_sample(g, logits, head, targets)?;
    Ok(g.mean_all(l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::NdArray;

    fn bce(logits: Vec<Scalar>, t: &[Scalar]) -> Scalar {
        let mut g = Graph::new();
        let s = g.constant(NdArray::from_vec(logits));
        let l = bce_with_logits(&mut g, s, t).unwrap();
        g.value(l).item().unwrap()
    }

    #[test]
    fn bce_limits_and_closed_form() {
        assert!(bce(vec![800.0], &[1.0]) < 1e-300);
        assert!((bce(vec![0.0], &[0.0]) - std::f64::consts::LN_2 as Scalar).abs() < 1e-15);
        assert!((bce(vec![0.0], &[1.0]) - std::f64::consts::LN_2 as Scalar).abs() < 1e-15);
        let want =
            ((1.0 + (-2.0 as Scalar).exp()).ln() + (1.0 + (-1.0 as Scalar).exp()).ln()) / 2.0;
        assert!((bce(vec![2.0, -1.0], &[1.0, 0.0]) - want).abs() < 1e-15);
        assert!(bce(vec![-800.0, 800.0], &[1.0, 0.0]).is_finite());
    }

    #[test]
    fn cce_matches_direct_softmax() {
        let logits = vec![
            0.3, -1.2, 2.0, 0.7, 1.1, 0.0, -0.4, 3.3, -2.2, 0.9, 0.05, -0.6,
        ];
        let targets = [2, 0, 3];
        let mut want = 0.0;
        for (row, &t) in logits.chunks(4).zip(&targets) {
            let z: Scalar = row.iter().map(|v: &Scalar| v.exp()).sum();
            want -= (row[t].exp() / z).ln();
        }
        want /= 3.0;
        let mut g = Graph::new();
        let s = g.constant(NdArray::new(vec![3, 4], logits).unwrap());
        let l = cce_with_logits(&mut g, s, &targets).unwrap();
        assert!((g.value(l).item().unwrap() - want).abs() < 1e-10);
    }

    #[test]
    fn cce_uniform_and_dominant() {
        let mut g = Graph::new();
        let s = g.constant(NdArray::zeros(&[1, 5]));
        let l = cce_with_logits(&mut g, s, &[3]).unwrap();
        assert!((g.value(l).item().unwrap() - (5.0 as Scalar).ln()).abs() < 1e-14);
        let s = g.constant(NdArray::new(vec![1, 3], vec![0.0, 500.0, 0.0]).unwrap());
        let l = cce_with_logits(&mut g, s, &[1]).unwrap();
        assert!(g.value(l).item().unwrap() < 1e-200);
        assert!(matches!(
            cce_with_logits(&mut g, s, &[3]),
            Err(Error::Data(_))
        ));
    }
}
