//! Reverse-mode automatic differentiation over [`NdArray`]s.
//!
//! A [`Graph`] is an append-only list of nodes; every op appends one node whose
//! parents already exist, so creation order is a topological order. The graph
//! is kept after [`Graph::backward`], which may be called again on the same or
//! another root. Gradients are *added* into the grad slots of leaf nodes and
//! into the persistent accumulators of [`Parameter`]s; callers zero them.
//!
//! [`Graph::grad_of`] is a separate first-order query: it returns the gradient
//! of a scalar with respect to an arbitrary node as a plain array, without
//! touching any grad slot and without appending nodes. Grad-CAM uses it to
//! obtain channel weights that are constants for the rest of the step.

pub(crate) mod kernels;
mod ops;
mod param;

pub use kernels::ConvGeom;
pub use ops::BackwardFn;
pub use param::Parameter;

use crate::error::{Error, Result};
use crate::tensor::NdArray;
use ops::Op;

/// Handle to a node of one [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

struct Node {
    value: NdArray,
    op: Op,
    requires_grad: bool,
    grad: Option<NdArray>,
    param: Option<Parameter>,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of nodes recorded so far.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &NdArray {
        &self.nodes[id.0].value
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Accumulated gradient of a non-parameter leaf created with
    /// [`Graph::variable`]. Parameter gradients live on the [`Parameter`].
    pub fn grad(&self, id: NodeId) -> Option<&NdArray> {
        self.nodes[id.0].grad.as_ref()
    }

    /// Clear the grad slots of all non-parameter leaves.
    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    /// A constant leaf; no gradient flows into it.
    pub fn constant(&mut self, value: NdArray) -> NodeId {
        self.push_leaf(value, false, None)
    }

    /// A leaf that collects gradients in its own grad slot.
    pub fn variable(&mut self, value: NdArray) -> NodeId {
        self.push_leaf(value, true, None)
    }

    /// A leaf bound to a persistent parameter. The current parameter value is
    /// copied in; backward adds into the parameter's gradient accumulator.
    pub fn param(&mut self, p: &Parameter) -> NodeId {
        let value = p.value().clone();
        self.push_leaf(value, true, Some(p.clone()))
    }

    /// Constant copy of a node's current value (stop-gradient).
    pub fn detach(&mut self, id: NodeId) -> NodeId {
        let v = self.nodes[id.0].value.clone();
        self.constant(v)
    }

    fn push_leaf(
        &mut self,
        value: NdArray,
        requires_grad: bool,
        param: Option<Parameter>,
    ) -> NodeId {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            grad: None,
            param,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn push(&mut self, value: NdArray, op: Op) -> NodeId {
        let requires_grad = op.parents().iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
            param: None,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Backpropagate from a single-element node, adding `∂root/∂leaf` into
    /// every gradient-requiring leaf.
    pub fn backward(&mut self, root: NodeId) -> Result<()> {
        self.check_scalar(root)?;
        let need: Vec<bool> = self.nodes.iter().map(|n| n.requires_grad).collect();
        let mut grads = self.sweep(root, 0, &need);
        for (node, grad) in self.nodes.iter_mut().zip(grads.iter_mut()) {
            if !matches!(node.op, Op::Leaf) || !node.requires_grad {
                continue;
            }
            let Some(g) = grad.take() else { continue };
            match &node.param {
                Some(p) => p.accumulate_grad(&g),
                None => match &mut node.grad {
                    Some(slot) => slot.add_assign(&g),
                    None => node.grad = Some(g),
                },
            }
        }
        Ok(())
    }

    /// `∂root/∂target` as a constant array. First-order only: the result is
    /// not connected to the graph, no node is appended and no grad slot or
    /// parameter accumulator changes.
    pub fn grad_of(&self, root: NodeId, target: NodeId) -> Result<NdArray> {
        self.check_scalar(root)?;
        if target.0 > root.0 {
            return Err(Error::usage("grad_of target was created after the root"));
        }
        let mut dep = vec![false; root.0 + 1];
        dep[target.0] = true;
        for i in target.0 + 1..=root.0 {
            dep[i] = self.nodes[i].op.parents().iter().any(|p| dep[p.0]);
        }
        if !dep[root.0] {
            return Err(Error::usage(format!(
                "node {} is not reachable from root {}",
                target.0, root.0
            )));
        }
        let mut grads = self.sweep(root, target.0, &dep);
        grads[target.0]
            .take()
            .ok_or_else(|| Error::Invariant("no gradient reached the target".into()))
    }

    fn check_scalar(&self, root: NodeId) -> Result<()> {
        let v = &self.nodes[root.0].value;
        if v.len() != 1 {
            return Err(Error::usage(format!(
                "backward root must hold one element, got shape {:?}",
                v.shape()
            )));
        }
        Ok(())
    }

    /// Reverse sweep over nodes `lo..=root`, propagating only into nodes
    /// flagged in `need`.
    fn sweep(&self, root: NodeId, lo: usize, need: &[bool]) -> Vec<Option<NdArray>> {
        let mut grads: Vec<Option<NdArray>> = (0..=root.0).map(|_| None).collect();
        grads[root.0] = Some(NdArray::full(self.nodes[root.0].value.shape(), 1.0));
        for i in (lo..=root.0).rev() {
            if !need[i] {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !matches!(node.op, Op::Leaf) {
                node.op
                    .backward(&self.nodes, &node.value, &g, need, &mut grads);
            }
            grads[i] = Some(g);
        }
        grads
    }
}

fn accumulate(grads: &mut [Option<NdArray>], id: NodeId, g: NdArray) {
    match &mut grads[id.0] {
        Some(slot) => slot.add_assign(&g),
        None => grads[id.0] = Some(g),
    }
}

#[cfg(test)]
mod tests;
