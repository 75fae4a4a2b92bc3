use super::Op;
use crate::error::{invalid, shape_err, Result};
use crate::graph::{GradAcc, Graph, Var};
use crate::tensor::Tensor;

/// How a batch-norm op obtains its per-channel statistics.
#[derive(Clone, Copy, Debug)]
pub enum BnMode<'a> {
    /// Normalize with the statistics of the current batch.
    Train,
    /// Normalize with stored running statistics.
    Eval {
        running_mean: &'a [f64],
        running_var: &'a [f64],
    },
}

/// Per-channel statistics of one training batch. `var` is the unbiased
/// estimate used for running-variance updates.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl Graph {
    /// [`Graph::batch_norm`] restricted to `[B, C, F, T]` input.
    pub fn batch_norm2d(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mode: BnMode<'_>,
        eps: f64,
    ) -> Result<(Var, Option<BatchStats>)> {
        self.value(x).dims4("batch_norm2d")?;
        self.batch_norm(x, gamma, beta, mode, eps)
    }

    /// Batch normalization over every axis except 1 (channels).
    ///
    /// Works for any rank ≥ 2 input `[B, C, ...]`; statistics pool the batch
    /// and all trailing axes. Returns the batch statistics in train mode.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mode: BnMode<'_>,
        eps: f64,
    ) -> Result<(Var, Option<BatchStats>)> {
        let tx = self.value(x);
        let shape = tx.shape().to_vec();
        if shape.len() < 2 {
            return Err(shape_err("batch_norm", format!("need [B, C, ...], got {:?}", shape)));
        }
        let (bsz, c) = (shape[0], shape[1]);
        let inner: usize = shape[2..].iter().product();
        let n = bsz * inner;
        if n == 0 {
            return Err(invalid("batch_norm", "zero-size batch"));
        }
        for (name, v) in [("gamma", gamma), ("beta", beta)] {
            if self.value(v).shape() != [c] {
                return Err(shape_err(
                    "batch_norm",
                    format!("{} shape {:?} vs {} channels", name, self.value(v).shape(), c),
                ));
            }
        }
        let data = tx.data();
        let (mean, var, stats) = match mode {
            BnMode::Train => {
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for ch in 0..c {
                    let mut s = 0.0;
                    for b in 0..bsz {
                        s += data[(b * c + ch) * inner..(b * c + ch + 1) * inner].iter().sum::<f64>();
                    }
                    let m = s / n as f64;
                    let mut ss = 0.0;
                    for b in 0..bsz {
                        ss += data[(b * c + ch) * inner..(b * c + ch + 1) * inner]
                            .iter()
                            .map(|v| (v - m) * (v - m))
                            .sum::<f64>();
                    }
                    mean[ch] = m;
                    var[ch] = ss / n as f64;
                }
                let unbiased = if n > 1 {
                    var.iter().map(|v| v * n as f64 / (n - 1) as f64).collect()
                } else {
                    var.clone()
                };
                let stats = BatchStats {
                    mean: mean.clone(),
                    var: unbiased,
                };
                (mean, var, Some(stats))
            }
            BnMode::Eval {
                running_mean,
                running_var,
            } => {
                if running_mean.len() != c || running_var.len() != c {
                    return Err(shape_err("batch_norm", "running statistics length mismatch"));
                }
                (running_mean.to_vec(), running_var.to_vec(), None)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let (g, bt) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![0.0; data.len()];
        let mut out = vec![0.0; data.len()];
        for b in 0..bsz {
            for ch in 0..c {
                let range = (b * c + ch) * inner..(b * c + ch + 1) * inner;
                for i in range {
                    let h = (data[i] - mean[ch]) * inv_std[ch];
                    xhat[i] = h;
                    out[i] = g[ch] * h + bt[ch];
                }
            }
        }
        let out = Tensor::new(shape, out)?;
        let batch_stats = stats.is_some();
        let v = self.push(
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            },
        );
        Ok((v, stats))
    }
}

pub(crate) fn backward<'a>(op: &Op, gout: &Tensor, val: &impl Fn(&Var) -> &'a Tensor, acc: &mut GradAcc) {
    let Op::BatchNorm {
        x,
        gamma,
        beta,
        xhat,
        inv_std,
        batch_stats,
    } = op
    else {
        unreachable!()
    };
    let shape = val(x).shape();
    let (bsz, c) = (shape[0], shape[1]);
    let inner: usize = shape[2..].iter().product();
    let n = (bsz * inner) as f64;
    let g = gout.data();
    let mut sum_g = vec![0.0; c];
    let mut sum_gx = vec![0.0; c];
    for b in 0..bsz {
        for ch in 0..c {
            for i in (b * c + ch) * inner..(b * c + ch + 1) * inner {
                sum_g[ch] += g[i];
                sum_gx[ch] += g[i] * xhat[i];
            }
        }
    }
    if acc.wants(*x) {
        let gam = val(gamma).data();
        let mut gx = vec![0.0; g.len()];
        for b in 0..bsz {
            for ch in 0..c {
                let k = gam[ch] * inv_std[ch];
                for i in (b * c + ch) * inner..(b * c + ch + 1) * inner {
                    gx[i] = if *batch_stats {
                        k * (g[i] - sum_g[ch] / n - xhat[i] * sum_gx[ch] / n)
                    } else {
                        k * g[i]
                    };
                }
            }
        }
        acc.add_data(*x, gx);
    }
    acc.add_data(*gamma, sum_gx);
    acc.add_data(*beta, sum_g);
}
