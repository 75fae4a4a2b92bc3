use super::Op;
use crate::error::{invalid, shape_err, Result};
use crate::graph::{GradAcc, Graph, Var};
use crate::tensor::Tensor;

/// Lower clamp on `ln p` and `ln(1 - p)`.
const LOG_FLOOR: f64 = -100.0;

fn clamped_ln(v: f64) -> f64 {
    if v > 0.0 {
        v.ln().max(LOG_FLOOR)
    } else {
        LOG_FLOOR
    }
}

impl Graph {
    /// Mean binary cross-entropy between probabilities `p` and a constant
    /// `target` of the same shape. Logs are clamped at -100.
    pub fn bce(&mut self, p: Var, target: &Tensor) -> Result<Var> {
        let tp = self.value(p);
        if tp.shape() != target.shape() {
            return Err(shape_err("bce", format!("{:?} vs {:?}", tp.shape(), target.shape())));
        }
        if tp.numel() == 0 {
            return Err(invalid("bce", "empty input"));
        }
        let s: f64 = tp
            .data()
            .iter()
            .zip(target.data())
            .map(|(&p, &y)| -(y * clamped_ln(p) + (1.0 - y) * clamped_ln(1.0 - p)))
            .sum();
        let out = Tensor::scalar(s / tp.numel() as f64);
        Ok(self.push(
            out,
            Op::Bce {
                p,
                target: target.clone(),
            },
        ))
    }

    /// Mean squared error between two tensors of the same shape.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("mse", format!("{:?} vs {:?}", ta.shape(), tb.shape())));
        }
        if ta.numel() == 0 {
            return Err(invalid("mse", "empty input"));
        }
        let s: f64 = ta.data().iter().zip(tb.data()).map(|(x, y)| (x - y) * (x - y)).sum();
        let out = Tensor::scalar(s / ta.numel() as f64);
        Ok(self.push(out, Op::Mse { a, b }))
    }
}

pub(crate) fn bce_backward(p: Var, tp: &Tensor, target: &Tensor, gout: &Tensor, acc: &mut GradAcc) {
    let scale = gout.item() / tp.numel() as f64;
    let g = tp
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &y)| {
            // Zero slope where the log is clamped.
            let dp = if p > LOG_FLOOR.exp() { -y / p } else { 0.0 };
            let dq = if 1.0 - p > LOG_FLOOR.exp() { (1.0 - y) / (1.0 - p) } else { 0.0 };
            scale * (dp + dq)
        })
        .collect();
    acc.add_data(p, g);
}

pub(crate) fn mse_backward(a: Var, b: Var, ta: &Tensor, tb: &Tensor, gout: &Tensor, acc: &mut GradAcc) {
    let scale = 2.0 * gout.item() / ta.numel() as f64;
    let diff: Vec<f64> = ta.data().iter().zip(tb.data()).map(|(x, y)| scale * (x - y)).collect();
    if acc.wants(b) {
        acc.add_data(b, diff.iter().map(|v| -v).collect());
    }
    acc.add_data(a, diff);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_matches_closed_form() {
        let mut g = Graph::new();
        let p = g.leaf(Tensor::new(vec![2], vec![0.8, 0.3]).unwrap());
        let y = Tensor::new(vec![2], vec![1.0, 0.0]).unwrap();
        let l = g.bce(p, &y).unwrap();
        let want = -(0.8f64.ln() + 0.7f64.ln()) / 2.0;
        assert!((g.value(l).item() - want).abs() < 1e-15);
    }

    #[test]
    fn bce_is_finite_at_saturated_predictions() {
        let mut g = Graph::new();
        let p = g.leaf(Tensor::new(vec![2], vec![0.0, 1.0]).unwrap());
        let y = Tensor::new(vec![2], vec![1.0, 0.0]).unwrap();
        let l = g.bce(p, &y).unwrap();
        assert_eq!(g.value(l).item(), 100.0);
        let grads = g.backward(l).unwrap();
        assert!(grads.get(p).unwrap().is_finite());
    }

    #[test]
    fn mse_of_identical_inputs_is_zero() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::full(&[3, 2], 0.7));
        let b = g.leaf(Tensor::full(&[3, 2], 0.7));
        let l = g.mse(a, b).unwrap();
        assert_eq!(g.value(l).item(), 0.0);
    }
}
