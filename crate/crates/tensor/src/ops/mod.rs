//! Differentiable operations recorded on a [`Graph`](crate::Graph).
//!
//! Each submodule adds forward methods to `Graph` and provides the matching
//! backward rule; [`backward`] dispatches on the recorded [`Op`].

mod blend;
mod conv;
mod elementwise;
pub(crate) mod gemm;
mod gru;
mod loss;
mod norm;
mod reduce;
mod shape;

pub use gru::GruWeights;
pub use norm::{BatchStats, BnMode};

use crate::graph::{GradAcc, Node, Var};
use crate::tensor::Tensor;

pub(crate) enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Dropout {
        x: Var,
        mask: Vec<f64>,
    },
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        dilation: usize,
    },
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        batch_stats: bool,
    },
    Softmax {
        x: Var,
        axis: usize,
    },
    Sum {
        x: Var,
        axis: usize,
    },
    Mean {
        x: Var,
        axis: usize,
    },
    SumAll(Var),
    MeanAll(Var),
    AvgPool2d {
        x: Var,
        kf: usize,
        kt: usize,
    },
    Reshape(Var),
    Permute {
        x: Var,
        perm: Vec<usize>,
    },
    Concat {
        xs: Vec<Var>,
        axis: usize,
    },
    Narrow {
        x: Var,
        axis: usize,
        start: usize,
    },
    Expand {
        x: Var,
        axis: usize,
    },
    TimeDiff(Var),
    FreqBlend {
        branches: Vec<Var>,
        att: Var,
    },
    Gru(Box<gru::GruRecord>),
    Bce {
        p: Var,
        target: Tensor,
    },
    Mse {
        a: Var,
        b: Var,
    },
}

impl Op {
    pub(crate) fn inputs(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Mse { a, b } => vec![*a, *b],
            Scale(x, _) | AddScalar(x) | Relu(x) | Sigmoid(x) | Tanh(x) | SumAll(x)
            | MeanAll(x) | Reshape(x) | TimeDiff(x) => vec![*x],
            Dropout { x, .. }
            | Softmax { x, .. }
            | Sum { x, .. }
            | Mean { x, .. }
            | AvgPool2d { x, .. }
            | Permute { x, .. }
            | Narrow { x, .. }
            | Expand { x, .. } => vec![*x],
            Bce { p, .. } => vec![*p],
            Conv2d { x, w, b, .. } | Linear { x, w, b } => {
                let mut v = vec![*x, *w];
                v.extend(b.iter().copied());
                v
            }
            BatchNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Concat { xs, .. } => xs.clone(),
            FreqBlend { branches, att } => {
                let mut v = branches.clone();
                v.push(*att);
                v
            }
            Gru(rec) => rec.inputs(),
        }
    }
}

pub(crate) fn backward(op: &Op, out: &Tensor, gout: &Tensor, nodes: &[Node], acc: &mut GradAcc) {
    let val = |v: &Var| -> &Tensor { &nodes[v.0].value };
    use Op::*;
    match op {
        Leaf => {}
        Add(..) | Sub(..) | Mul(..) | Div(..) | Scale(..) | AddScalar(..) | Relu(..)
        | Sigmoid(..) | Tanh(..) | Dropout { .. } => {
            elementwise::backward(op, out, gout, &val, acc)
        }
        Conv2d {
            x,
            w,
            b,
            dilation,
        } => conv::conv2d_backward(val(x), val(w), *x, *w, *b, *dilation, gout, acc),
        Linear { x, w, b } => conv::linear_backward(val(x), val(w), *x, *w, *b, gout, acc),
        BatchNorm { .. } => norm::backward(op, gout, &val, acc),
        Softmax { x, axis } => reduce::softmax_backward(*x, *axis, out, gout, acc),
        Sum { x, axis } => reduce::sum_backward(*x, *axis, val(x), gout, 1.0, acc),
        Mean { x, axis } => {
            let n = val(x).shape()[*axis] as f64;
            reduce::sum_backward(*x, *axis, val(x), gout, 1.0 / n, acc)
        }
        SumAll(x) => acc.add(*x, Tensor::full(val(x).shape(), gout.item())),
        MeanAll(x) => {
            let n = val(x).numel() as f64;
            acc.add(*x, Tensor::full(val(x).shape(), gout.item() / n))
        }
        AvgPool2d { x, kf, kt } => reduce::avg_pool2d_backward(*x, val(x), *kf, *kt, gout, acc),
        Reshape(x) => acc.add_data(*x, gout.data().to_vec()),
        Permute { x, perm } => shape::permute_backward(*x, val(x), perm, gout, acc),
        Concat { xs, axis } => shape::concat_backward(xs, *axis, &val, gout, acc),
        Narrow { x, axis, start } => shape::narrow_backward(*x, val(x), *axis, *start, gout, acc),
        Expand { x, axis } => shape::expand_backward(*x, *axis, gout, acc),
        TimeDiff(x) => blend::time_diff_backward(*x, gout, acc),
        FreqBlend { branches, att } => blend::freq_blend_backward(branches, *att, &val, gout, acc),
        Gru(rec) => gru::backward(rec, &val, out, gout, acc),
        Bce { p, target } => loss::bce_backward(*p, val(p), target, gout, acc),
        Mse { a, b } => loss::mse_backward(*a, *b, val(a), val(b), gout, acc),
    }
}
