use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::ops::{self, Op};
use crate::param::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Storage precision of forward values.
///
/// Arithmetic and reductions always accumulate in `f64`; in `F32` mode every
/// op output is rounded to the nearest `f32` before it is stored.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Precision {
    #[default]
    F64,
    F32,
}

impl Precision {
    pub(crate) fn round(self, t: Tensor) -> Tensor {
        match self {
            Precision::F64 => t,
            Precision::F32 => {
                let mut t = t;
                for v in t.data_mut() {
                    *v = *v as f32 as f64;
                }
                t
            }
        }
    }
}

pub(crate) struct Node {
    pub value: Arc<Tensor>,
    pub op: Op,
    pub requires_grad: bool,
}

/// Tape of recorded operations.
///
/// Every op appends one node; [`Graph::backward`] walks the tape in reverse.
/// A graph is used for a single forward/backward pass and then dropped.
pub struct Graph {
    pub(crate) nodes: Vec<Node>,
    precision: Precision,
    grad_enabled: bool,
    param_leaves: Vec<(Var, ParamId)>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            precision: Precision::F64,
            grad_enabled: true,
            param_leaves: Vec::new(),
        }
    }

    /// A graph whose leaves never require gradients (inference, EMA teacher).
    pub fn no_grad() -> Self {
        Self {
            grad_enabled: false,
            ..Self::new()
        }
    }

    pub fn with_precision(mut self, precision: Precision) -> Self {
        self.precision = precision;
        self
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Input leaf; differentiable when the graph has gradients enabled.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        let requires_grad = self.grad_enabled;
        self.push_leaf(Arc::new(value), requires_grad)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_leaf(Arc::new(value), false)
    }

    /// Brings a stored parameter onto the tape without copying its data.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let p = store.get(id);
        let requires_grad = self.grad_enabled && p.trainable;
        let v = self.push_leaf(Arc::clone(&p.value), requires_grad);
        if requires_grad {
            self.param_leaves.push((v, id));
        }
        v
    }

    fn push_leaf(&mut self, value: Arc<Tensor>, requires_grad: bool) -> Var {
        let value = match self.precision {
            Precision::F64 => value,
            p => Arc::new(p.round((*value).clone())),
        };
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn push(&mut self, value: Tensor, op: Op) -> Var {
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        let value = self.precision.round(value);
        self.nodes.push(Node {
            value: Arc::new(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(invalid(
                "backward",
                format!("loss must be a scalar, got shape {:?}", self.shape(loss)),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(gout) = grads[i].take() else {
                continue;
            };
            let mut acc = GradAcc {
                grads: &mut grads,
                nodes: &self.nodes,
            };
            ops::backward(&node.op, &node.value, &gout, &self.nodes, &mut acc);
            grads[i] = Some(gout);
        }
        Ok(Gradients { grads })
    }

    /// Gradients of every trainable parameter that entered this graph,
    /// summed when a parameter was brought in more than once.
    pub fn param_grads(&self, grads: &Gradients) -> Vec<(ParamId, Tensor)> {
        let mut out: Vec<(ParamId, Tensor)> = Vec::new();
        for &(v, id) in &self.param_leaves {
            let g = match grads.get(v) {
                Some(g) => g.clone(),
                None => Tensor::zeros(self.shape(v)),
            };
            match out.iter_mut().find(|(pid, _)| *pid == id) {
                Some((_, acc)) => acc.add_assign(&g),
                None => out.push((id, g)),
            }
        }
        out
    }
}

/// Result of a reverse sweep, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

pub(crate) struct GradAcc<'a> {
    grads: &'a mut [Option<Tensor>],
    nodes: &'a [Node],
}

impl GradAcc<'_> {
    pub fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn add(&mut self, v: Var, g: Tensor) {
        if !self.wants(v) {
            return;
        }
        match &mut self.grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    /// Accumulate from a raw buffer matching `v`'s shape.
    pub fn add_data(&mut self, v: Var, data: Vec<f64>) {
        if !self.wants(v) {
            return;
        }
        let shape = self.nodes[v.0].value.shape().to_vec();
        let g = Tensor::new(shape, data).expect("gradient buffer matches input shape");
        self.add(v, g);
    }
}
