use std::collections::BTreeMap;

use super::exec::Exec;
use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward rule of a recorded op.
///
/// `backward` receives the gradient of the loss with respect to the op's
/// output together with the forward input and output values, and returns one
/// entry per input. `None` means "no gradient flows to this input".
pub trait Function<T: Real> {
    fn name(&self) -> &'static str;

    fn backward(
        &self,
        grad: &Tensor<T>,
        inputs: &[&Tensor<T>],
        output: &Tensor<T>,
        exec: Exec,
    ) -> Vec<Option<Tensor<T>>>;
}

struct Node<T: Real> {
    value: Tensor<T>,
    inputs: Vec<Var>,
    func: Option<Box<dyn Function<T>>>,
    requires_grad: bool,
}

/// The tape. Nodes are appended in execution order, so index order is a
/// topological order and backward is a single reverse sweep.
pub struct Graph<T: Real> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
    backward_done: bool,
    exec: Exec,
    scope: &'static str,
    flops: BTreeMap<&'static str, u64>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self::with_exec(Exec::default())
    }

    pub fn with_exec(exec: Exec) -> Self {
        Graph {
            nodes: Vec::new(),
            grads: Vec::new(),
            backward_done: false,
            exec,
            scope: "default",
            flops: BTreeMap::new(),
        }
    }

    pub fn exec(&self) -> Exec {
        self.exec
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, node: Node<T>) -> Var {
        self.nodes.push(node);
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(Node {
            value,
            inputs: Vec::new(),
            func: None,
            requires_grad,
        })
    }

    /// Records an op. The backward rule is dropped when no input needs a
    /// gradient.
    pub fn apply(
        &mut self,
        func: impl Function<T> + 'static,
        inputs: &[Var],
        value: Tensor<T>,
    ) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push(Node {
            value,
            inputs: inputs.to_vec(),
            func: requires_grad.then(|| Box::new(func) as Box<dyn Function<T>>),
            requires_grad,
        })
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Takes the gradient buffer out of the graph.
    pub fn take_grad(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }

    pub fn reset_grads(&mut self) {
        self.grads.clear();
        self.backward_done = false;
    }

    /// Populates the gradient of every reachable `requires_grad` leaf.
    ///
    /// Intermediate gradients are released as soon as they have been
    /// propagated; only leaf gradients remain readable afterwards.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::Backward(
                "backward already ran on this graph; call reset_grads first".into(),
            ));
        }
        let shape = self.shape(loss);
        if shape != [1] {
            return Err(Error::Backward(format!(
                "loss must be a scalar, got shape {shape:?}"
            )));
        }
        if !self.nodes[loss.0].requires_grad {
            return Err(Error::Backward(
                "loss does not depend on any trainable leaf".into(),
            ));
        }
        self.backward_done = true;
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[loss.0] = Some(Tensor::scalar(T::ONE));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            let Some(func) = node.func.as_ref() else {
                continue;
            };
            let Some(grad) = self.grads[idx].take() else {
                continue;
            };
            let inputs: Vec<&Tensor<T>> =
                node.inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            let input_grads = func.backward(&grad, &inputs, &node.value, self.exec);
            debug_assert_eq!(input_grads.len(), node.inputs.len(), "{}", func.name());
            for (v, g) in node.inputs.iter().zip(input_grads) {
                let Some(g) = g else { continue };
                if !self.nodes[v.0].requires_grad {
                    continue;
                }
                debug_assert_eq!(
                    g.shape(),
                    self.nodes[v.0].value.shape(),
                    "gradient shape from {}",
                    func.name()
                );
                match &mut self.grads[v.0] {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            }
        }
        Ok(())
    }

    /// Sets the label under which subsequent op costs are accumulated and
    /// returns the previous label.
    pub fn set_scope(&mut self, scope: &'static str) -> &'static str {
        std::mem::replace(&mut self.scope, scope)
    }

    pub(crate) fn count_flops(&mut self, n: u64) {
        *self.flops.entry(self.scope).or_insert(0) += n;
    }

    /// Forward multiply-accumulate and elementwise op counts per scope.
    pub fn flops(&self) -> &BTreeMap<&'static str, u64> {
        &self.flops
    }

    pub fn flops_in(&self, scope: &str) -> u64 {
        self.flops.get(scope).copied().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_twice_is_an_error() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::scalar(2.0));
        let y = g.mul(x, x).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[4.0]);
        assert!(g.backward(y).is_err());
        g.reset_grads();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[4.0]);
    }

    #[test]
    fn rejects_non_scalar_and_detached_losses() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::new(&[2], vec![1.0, 2.0]).unwrap());
        assert!(g.backward(x).is_err());
        let c = g.constant(Tensor::scalar(1.0));
        let d = g.scale(c, 2.0);
        assert!(g.backward(d).is_err());
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::scalar(3.0));
        let c = g.constant(Tensor::scalar(5.0));
        let y = g.mul(x, c).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[5.0]);
        assert!(g.grad(c).is_none());
    }
}
