use rand::Rng;

use super::Op;
use crate::error::{invalid, shape_err, Result};
use crate::graph::{GradAcc, Graph, Var};
use crate::rng::stream_rng;
use crate::tensor::Tensor;

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(name, format!("{:?} vs {:?}", ta.shape(), tb.shape())));
        }
        ta.zip_map(tb, f)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary(a, b, "add", |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary(a, b, "div", |x, y| x / y)?;
        Ok(self.push(out, Op::Div(a, b)))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let out = self.value(x).map(|v| v * s);
        self.push(out, Op::Scale(x, s))
    }

    pub fn add_scalar(&mut self, x: Var, s: f64) -> Var {
        let out = self.value(x).map(|v| v + s);
        self.push(out, Op::AddScalar(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(0.0));
        self.push(out, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        self.push(out, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::tanh);
        self.push(out, Op::Tanh(x))
    }

    /// Inverted dropout with a mask drawn from the stream identified by `key`.
    /// Identity when `train` is false or `p == 0`.
    pub fn dropout(&mut self, x: Var, p: f64, train: bool, key: u64) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(invalid("dropout", format!("p must lie in [0, 1), got {}", p)));
        }
        if !train || p == 0.0 {
            return Ok(x);
        }
        let mut rng = stream_rng(key);
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..self.value(x).numel())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let mut out = self.value(x).clone();
        for (o, m) in out.data_mut().iter_mut().zip(&mask) {
            *o *= m;
        }
        Ok(self.push(out, Op::Dropout { x, mask }))
    }
}

pub(crate) fn backward<'a>(
    op: &Op,
    out: &Tensor,
    gout: &Tensor,
    val: &impl Fn(&Var) -> &'a Tensor,
    acc: &mut GradAcc,
) {
    let zip = |a: &Tensor, f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
        gout.data().iter().zip(a.data()).map(|(&g, &x)| f(g, x)).collect()
    };
    match op {
        Op::Add(a, b) => {
            acc.add(*a, gout.clone());
            acc.add(*b, gout.clone());
        }
        Op::Sub(a, b) => {
            acc.add(*a, gout.clone());
            acc.add(*b, gout.map(|g| -g));
        }
        Op::Mul(a, b) => {
            if acc.wants(*a) {
                acc.add_data(*a, zip(val(b), &|g, y| g * y));
            }
            if acc.wants(*b) {
                acc.add_data(*b, zip(val(a), &|g, x| g * x));
            }
        }
        Op::Div(a, b) => {
            let (ta, tb) = (val(a), val(b));
            if acc.wants(*a) {
                acc.add_data(*a, zip(tb, &|g, y| g / y));
            }
            if acc.wants(*b) {
                let g: Vec<f64> = gout
                    .data()
                    .iter()
                    .zip(ta.data().iter().zip(tb.data()))
                    .map(|(&g, (&x, &y))| -g * x / (y * y))
                    .collect();
                acc.add_data(*b, g);
            }
        }
        Op::Scale(x, s) => acc.add(*x, gout.map(|g| g * s)),
        Op::AddScalar(x) => acc.add(*x, gout.clone()),
        Op::Relu(x) => acc.add_data(*x, zip(val(x), &|g, v| if v > 0.0 { g } else { 0.0 })),
        Op::Sigmoid(x) => acc.add_data(*x, zip(out, &|g, y| g * y * (1.0 - y))),
        Op::Tanh(x) => acc.add_data(*x, zip(out, &|g, y| g * (1.0 - y * y))),
        Op::Dropout { x, mask } => {
            let g = gout.data().iter().zip(mask).map(|(g, m)| g * m).collect();
            acc.add_data(*x, g)
        }
        _ => unreachable!("not an elementwise op"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_of_zero_is_half() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::zeros(&[3]));
        let y = g.sigmoid(x);
        assert_eq!(g.value(y).data(), &[0.5, 0.5, 0.5]);
    }

    #[test]
    fn sigmoid_saturates_without_overflow() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
    }

    #[test]
    fn dropout_is_identity_in_eval() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::full(&[10], 2.0));
        let y = g.dropout(x, 0.5, false, 7).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn dropout_mask_depends_only_on_key() {
        let run = |key| {
            let mut g = Graph::new();
            let x = g.leaf(Tensor::full(&[64], 1.0));
            let y = g.dropout(x, 0.5, true, key).unwrap();
            g.value(y).clone()
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
        assert!(run(3).data().iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn binary_ops_reject_shape_mismatch() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::zeros(&[2, 3]));
        let b = g.leaf(Tensor::zeros(&[3, 2]));
        assert!(g.add(a, b).is_err());
    }
}
