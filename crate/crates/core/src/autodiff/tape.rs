use std::borrow::Cow;

use super::ops::{self, OpKind};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
struct Node<'a> {
    kind: Option<OpKind>,
    parents: Vec<Var>,
    value: Cow<'a, Tensor>,
    tracks_grad: bool,
}

/// Append-only record of a computation. Nodes are pushed in evaluation order,
/// so parents always precede children.
///
/// Constants may be borrowed (`constant_ref`) so that model parameters are not
/// copied onto every tape that only needs gradients with respect to inputs.
#[derive(Debug, Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Input whose gradient is wanted.
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push_leaf(Cow::Owned(value), true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_leaf(Cow::Owned(value), false)
    }

    /// Borrowed constant input.
    pub fn constant_ref(&mut self, value: &'a Tensor) -> Var {
        self.push_leaf(Cow::Borrowed(value), false)
    }

    fn push_leaf(&mut self, value: Cow<'a, Tensor>, tracks_grad: bool) -> Var {
        self.nodes.push(Node {
            kind: None,
            parents: Vec::new(),
            value,
            tracks_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn tracks_grad(&self, v: Var) -> bool {
        self.nodes[v.0].tracks_grad
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.0 >= self.nodes.len() {
            return Err(Error::contract(format!("var {} is not on this tape", v.0)));
        }
        Ok(())
    }

    /// Evaluate `kind` on recorded inputs and record the result.
    pub fn apply(&mut self, kind: OpKind, inputs: &[Var]) -> Result<Var> {
        for &v in inputs {
            self.check(v)?;
        }
        let values: Vec<&Tensor> = inputs.iter().map(|v| &*self.nodes[v.0].value).collect();
        let value = ops::forward(&kind, &values)?;
        let tracks_grad = inputs.iter().any(|v| self.nodes[v.0].tracks_grad);
        self.nodes.push(Node {
            kind: Some(kind),
            parents: inputs.to_vec(),
            value: Cow::Owned(value),
            tracks_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Mul, &[a, b])
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Neg, &[a])
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Exp, &[a])
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Log, &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Tanh, &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Sigmoid, &[a])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Matmul, &[a, b])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Sum, &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Mean, &[a])
    }

    pub fn broadcast_add(&mut self, a: Var, row: Var) -> Result<Var> {
        self.apply(OpKind::BroadcastAdd, &[a, row])
    }

    pub fn broadcast_mul(&mut self, a: Var, row: Var) -> Result<Var> {
        self.apply(OpKind::BroadcastMul, &[a, row])
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        self.apply(OpKind::Clamp { lo, hi }, &[a])
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Abs, &[a])
    }

    pub fn max_reduce(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::MaxReduce, &[a])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.apply(OpKind::Scale(c), &[a])
    }

    pub fn select(&mut self, a: Var, indices: Vec<usize>) -> Result<Var> {
        self.apply(OpKind::Select(indices), &[a])
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::LogSoftmax, &[a])
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        self.check(root)?;
        let root_value = &self.nodes[root.0].value;
        if root_value.len() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar root, got shape {:?}",
                root_value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Tensor::full(root_value.shape(), 1.0));

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            let Some(kind) = &node.kind else { continue };
            if !node.tracks_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let wanted: Vec<bool> = node
                .parents
                .iter()
                .map(|p| self.nodes[p.0].tracks_grad)
                .collect();
            let inputs: Vec<&Tensor> =
                node.parents.iter().map(|p| &*self.nodes[p.0].value).collect();
            let local = ops::vjp(kind, &inputs, &node.value, &g, &wanted);
            for (parent, contribution) in node.parents.iter().zip(local) {
                let Some(c) = contribution else { continue };
                match &mut grads[parent.0] {
                    Some(acc) => {
                        for (s, v) in acc.data_mut().iter_mut().zip(c.data()) {
                            *s += v;
                        }
                    }
                    slot @ None => *slot = Some(c),
                }
            }
            // Intermediate gradients are consumed; keep the slot for leaves only.
            grads[idx] = None;
        }
        grads.resize(self.nodes.len(), None);
        Ok(Gradients {
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
            grads,
        })
    }

    /// Recompute every node from the recorded leaf values.
    pub fn replay(&self) -> Result<Vec<Tensor>> {
        let mut values: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match &node.kind {
                None => node.value.clone().into_owned(),
                Some(kind) => {
                    let inputs: Vec<&Tensor> = node.parents.iter().map(|p| &values[p.0]).collect();
                    ops::forward(kind, &inputs)?
                }
            };
            values.push(v);
        }
        Ok(values)
    }
}

/// Gradients of one root with respect to the tape's leaves.
#[derive(Debug)]
pub struct Gradients {
    shapes: Vec<Vec<usize>>,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for a leaf; zeros when the root does not depend on it.
    pub fn wrt(&self, v: Var) -> Tensor {
        match self.grads.get(v.0).and_then(|g| g.as_ref()) {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }

    pub fn take(&mut self, v: Var) -> Tensor {
        match self.grads.get_mut(v.0).and_then(Option::take) {
            Some(g) => g,
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }
}
