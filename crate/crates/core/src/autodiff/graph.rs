//! Define-by-run reverse-mode graph over dense tensors.
//!
//! A [`Graph`] records every operation as it executes. [`Var::backward`]
//! walks the recorded nodes in reverse and accumulates gradients into each
//! node that requires them. Graphs are built per forward pass and confined
//! to one worker; values are immutable once a node is created.

use std::cell::RefCell;
use std::rc::Rc;

use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

/// One gradient contribution per parent, in parent order.
type BackwardFn = Box<dyn Fn(&Tensor) -> Vec<Tensor>>;

struct Node {
    value: Rc<Tensor>,
    grad: Option<Tensor>,
    requires_grad: bool,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
}

#[derive(Default)]
struct GraphInner {
    nodes: Vec<Node>,
}

/// Recording tape for one forward pass.
#[derive(Clone, Default)]
pub struct Graph {
    inner: Rc<RefCell<GraphInner>>,
}

/// Handle to a node in a [`Graph`].
#[derive(Clone)]
pub struct Var {
    graph: Graph,
    idx: usize,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    /// Creates a leaf node. Leaves with `requires_grad` collect gradients
    /// across [`Var::backward`] calls until [`Graph::reset_grads`].
    pub fn leaf(&self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, vec![], None, requires_grad)
    }

    pub fn constant(&self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn reset_grads(&self) {
        for node in self.inner.borrow_mut().nodes.iter_mut() {
            node.grad = None;
        }
    }

    pub fn node_count(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub(crate) fn push(
        &self,
        value: Tensor,
        parents: Vec<usize>,
        backward: Option<BackwardFn>,
        requires_grad: bool,
    ) -> Var {
        let mut inner = self.inner.borrow_mut();
        let idx = inner.nodes.len();
        inner.nodes.push(Node {
            value: Rc::new(value),
            grad: None,
            requires_grad,
            parents,
            backward,
        });
        Var {
            graph: self.clone(),
            idx,
        }
    }

    pub(crate) fn same_graph(&self, other: &Graph) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }
}

impl Var {
    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub(crate) fn idx(&self) -> usize {
        self.idx
    }

    /// Shared handle to the node's value.
    pub fn value(&self) -> Rc<Tensor> {
        self.graph.inner.borrow().nodes[self.idx].value.clone()
    }

    /// Detached copy of the node's value.
    pub fn detach(&self) -> Tensor {
        (*self.value()).clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.inner.borrow().nodes[self.idx].requires_grad
    }

    pub fn grad(&self) -> Option<Tensor> {
        self.graph.inner.borrow().nodes[self.idx].grad.clone()
    }

    /// Backpropagates from a scalar loss. Gradients accumulate into every
    /// node that requires them; repeated calls without
    /// [`Graph::reset_grads`] keep accumulating.
    pub fn backward(&self) -> Result<()> {
        let inner = self.graph.inner.borrow();
        let loss = &inner.nodes[self.idx];
        if loss.value.len() != 1 {
            return Err(Error::invalid_argument(format!(
                "backward requires a scalar loss, got shape {:?}",
                loss.value.shape()
            )));
        }
        let mut tgrads: Vec<Option<Tensor>> = Vec::with_capacity(self.idx + 1);
        tgrads.resize_with(self.idx + 1, || None);
        tgrads[self.idx] = Some(Tensor::ones(loss.value.shape()));

        for i in (0..=self.idx).rev() {
            let node = &inner.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let (Some(grad_out), Some(bw)) = (&tgrads[i], &node.backward) else {
                continue;
            };
            let contribs = bw(grad_out);
            debug_assert_eq!(contribs.len(), node.parents.len());
            for (&p, c) in node.parents.iter().zip(contribs) {
                if !inner.nodes[p].requires_grad {
                    continue;
                }
                match &mut tgrads[p] {
                    Some(t) => t.add_assign(&c),
                    slot => *slot = Some(c),
                }
            }
        }
        drop(inner);

        let mut inner = self.graph.inner.borrow_mut();
        for (i, g) in tgrads.into_iter().enumerate() {
            let Some(g) = g else { continue };
            let node = &mut inner.nodes[i];
            if !node.requires_grad {
                continue;
            }
            match &mut node.grad {
                Some(t) => t.add_assign(&g),
                slot => *slot = Some(g),
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_of_sum_is_all_ones() {
        let g = Graph::new();
        let x = g.leaf(Tensor::from_fn(&[2, 3], |i| i as f64), true);
        let loss = x.sum_all().unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), Tensor::ones(&[2, 3]));
    }

    #[test]
    fn backward_of_dot_product_swaps_operands() {
        let g = Graph::new();
        let x = g.leaf(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap(), true);
        let y = g.leaf(Tensor::new(vec![3], vec![4.0, 5.0, 6.0]).unwrap(), true);
        let loss = x.mul(&y).unwrap().sum_all().unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap().data(), &[4.0, 5.0, 6.0]);
        assert_eq!(y.grad().unwrap().data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let g = Graph::new();
        let x = g.leaf(Tensor::zeros(&[2, 2]), true);
        assert!(x.backward().is_err());
    }

    #[test]
    fn repeated_backward_accumulates() {
        let g = Graph::new();
        let x = g.leaf(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap(), true);
        let loss = x.sum_all().unwrap();
        loss.backward().unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap().data(), &[2.0, 2.0]);
        g.reset_grads();
        assert!(x.grad().is_none());
    }
}
