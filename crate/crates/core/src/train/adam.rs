//! Adam with bias correction.

use sed_tensor::{ParamId, ParamStore, Tensor};

#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Option<Vec<f64>>>,
    v: Vec<Option<Vec<f64>>>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update for the given gradients.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[(ParamId, Tensor)]) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        if self.m.len() < store.len() {
            self.m.resize(store.len(), None);
            self.v.resize(store.len(), None);
        }
        for (id, g) in grads {
            let i = id.index();
            let n = g.numel();
            let m = self.m[i].get_or_insert_with(|| vec![0.0; n]);
            let v = self.v[i].get_or_insert_with(|| vec![0.0; n]);
            let w = store.tensor_mut(*id).data_mut();
            for k in 0..n {
                let gk = g.data()[k];
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * gk;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * gk * gk;
                let mh = m[k] / bc1;
                let vh = v[k] / bc2;
                w[k] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::new(vec![2], vec![1.0, -1.0]).unwrap()).unwrap();
        let mut opt = Adam::new(0.1, 0.9, 0.999, 1e-8);
        opt.step(&mut s, &[(id, Tensor::new(vec![2], vec![3.0, -0.5]).unwrap())]);
        let w = s.tensor(id).data();
        assert!((w[0] - 0.9).abs() < 1e-6 && (w[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::full(&[1], 5.0)).unwrap();
        let mut opt = Adam::new(0.1, 0.9, 0.999, 1e-8);
        for _ in 0..500 {
            let w = s.tensor(id).data()[0];
            opt.step(&mut s, &[(id, Tensor::full(&[1], 2.0 * (w - 2.0)))]);
        }
        assert!((s.tensor(id).data()[0] - 2.0).abs() < 1e-2);
    }
}
