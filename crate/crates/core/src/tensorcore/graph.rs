use crate::error::{Error, Result};

use super::Scalar;

/// Handle to a tensor recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(pub(super) usize);

pub(super) type BackFn<T> = Box<dyn Fn(&[T]) -> Vec<Vec<T>>>;

pub(super) struct Node<T> {
    pub shape: Vec<usize>,
    pub values: Vec<T>,
    pub requires_grad: bool,
    pub parents: Vec<TensorId>,
    /// Maps the output gradient to one gradient per parent, in parent order.
    pub backward: Option<BackFn<T>>,
}

/// A computation tape. Nodes are appended in topological order during the
/// forward pass; `backward` replays them in reverse. One graph per
/// forward/backward cycle, confined to a single logical thread.
pub struct Graph<T: Scalar> {
    pub(super) nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf tensor. Gradients accumulate on it iff `requires_grad`.
    pub fn leaf(
        &mut self,
        shape: &[usize],
        values: Vec<T>,
        requires_grad: bool,
    ) -> Result<TensorId> {
        let numel: usize = shape.iter().product();
        if values.len() != numel {
            return Err(Error::Shape {
                op: "leaf",
                lhs: shape.to_vec(),
                rhs: vec![values.len()],
            });
        }
        self.push("leaf", shape.to_vec(), values, Vec::new(), None, requires_grad)
    }

    /// Leaf that never receives gradients (masks, targets).
    pub fn constant(&mut self, shape: &[usize], values: Vec<T>) -> Result<TensorId> {
        self.leaf(shape, values, false)
    }

    pub fn scalar(&mut self, value: T) -> Result<TensorId> {
        self.leaf(&[1], vec![value], false)
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn values(&self, id: TensorId) -> &[T] {
        &self.nodes[id.0].values
    }

    pub fn requires_grad(&self, id: TensorId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Gradient of the last `backward` loss w.r.t. this tensor.
    pub fn grad(&self, id: TensorId) -> Option<&[T]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }

    pub(super) fn push(
        &mut self,
        op: &'static str,
        shape: Vec<usize>,
        values: Vec<T>,
        parents: Vec<TensorId>,
        backward: Option<BackFn<T>>,
        requires_grad: bool,
    ) -> Result<TensorId> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op });
        }
        debug_assert_eq!(values.len(), shape.iter().product::<usize>());
        self.nodes.push(Node {
            shape,
            values,
            requires_grad,
            parents,
            backward,
        });
        Ok(TensorId(self.nodes.len() - 1))
    }

    pub(super) fn push_op(
        &mut self,
        op: &'static str,
        shape: Vec<usize>,
        values: Vec<T>,
        parents: Vec<TensorId>,
        backward: BackFn<T>,
    ) -> Result<TensorId> {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        let backward = if requires_grad { Some(backward) } else { None };
        self.push(op, shape, values, parents, backward, requires_grad)
    }

    /// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate
    /// additively when a tensor feeds multiple ops.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if self.nodes[loss.0].values.len() != 1 {
            return Err(Error::Invalid(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![T::one()]);
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(grad_out) = grads[idx].take() else {
                continue;
            };
            if let Some(back) = &self.nodes[idx].backward {
                let parent_grads = back(&grad_out);
                debug_assert_eq!(parent_grads.len(), self.nodes[idx].parents.len());
                for (pid, pgrad) in self.nodes[idx].parents.clone().iter().zip(parent_grads) {
                    if !self.nodes[pid.0].requires_grad {
                        continue;
                    }
                    match &mut grads[pid.0] {
                        Some(acc) => {
                            for (a, g) in acc.iter_mut().zip(&pgrad) {
                                *a += *g;
                            }
                        }
                        slot => *slot = Some(pgrad),
                    }
                }
            }
            grads[idx] = Some(grad_out);
        }
        self.grads = grads;
        Ok(())
    }
}
