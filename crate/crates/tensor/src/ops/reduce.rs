use super::Op;
use crate::error::{invalid, Result};
use crate::graph::{GradAcc, Graph, Var};
use crate::tensor::Tensor;

fn removed_axis(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut s = shape.to_vec();
    s.remove(axis);
    s
}

impl Graph {
    /// Max-shifted softmax along `axis`.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let tx = self.value(x);
        let (outer, len, inner) = tx.axis_split(axis, "softmax")?;
        let d = tx.data();
        let mut out = vec![0.0; d.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| (o * len + k) * inner + i;
                let m = (0..len).map(|k| d[at(k)]).fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for k in 0..len {
                    let e = (d[at(k)] - m).exp();
                    out[at(k)] = e;
                    z += e;
                }
                for k in 0..len {
                    out[at(k)] /= z;
                }
            }
        }
        let out = Tensor::new(tx.shape().to_vec(), out)?;
        Ok(self.push(out, Op::Softmax { x, axis }))
    }

    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let out = reduce_axis(self.value(x), axis, 1.0, "sum_axis")?;
        Ok(self.push(out, Op::Sum { x, axis }))
    }

    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let n = *self
            .value(x)
            .shape()
            .get(axis)
            .ok_or_else(|| invalid("mean_axis", format!("axis {} out of range", axis)))?;
        if n == 0 {
            return Err(invalid("mean_axis", "cannot average an empty axis"));
        }
        let out = reduce_axis(self.value(x), axis, 1.0 / n as f64, "mean_axis")?;
        Ok(self.push(out, Op::Mean { x, axis }))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Tensor::scalar(s), Op::SumAll(x))
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.sum() / t.numel().max(1) as f64;
        self.push(Tensor::scalar(s), Op::MeanAll(x))
    }

    /// Non-overlapping average pooling over `(F, T)` of a `[B, C, F, T]`
    /// tensor; trailing remainders are dropped.
    pub fn avg_pool2d(&mut self, x: Var, kf: usize, kt: usize) -> Result<Var> {
        let tx = self.value(x);
        let [b, c, f, t] = tx.dims4("avg_pool2d")?;
        if kf == 0 || kt == 0 || kf > f || kt > t {
            return Err(invalid(
                "avg_pool2d",
                format!("window {}x{} does not fit input {}x{}", kf, kt, f, t),
            ));
        }
        if kf == 1 && kt == 1 {
            return Ok(x);
        }
        let (fo, to) = (f / kf, t / kt);
        let norm = 1.0 / (kf * kt) as f64;
        let d = tx.data();
        let mut out = vec![0.0; b * c * fo * to];
        for bc in 0..b * c {
            for i in 0..fo {
                for j in 0..to {
                    let mut s = 0.0;
                    for di in 0..kf {
                        let row = bc * f * t + (i * kf + di) * t + j * kt;
                        s += d[row..row + kt].iter().sum::<f64>();
                    }
                    out[(bc * fo + i) * to + j] = s * norm;
                }
            }
        }
        let out = Tensor::new(vec![b, c, fo, to], out)?;
        Ok(self.push(out, Op::AvgPool2d { x, kf, kt }))
    }
}

fn reduce_axis(t: &Tensor, axis: usize, scale: f64, op: &'static str) -> Result<Tensor> {
    let (outer, len, inner) = t.axis_split(axis, op)?;
    let d = t.data();
    let mut out = vec![0.0; outer * inner];
    for o in 0..outer {
        for k in 0..len {
            let src = &d[(o * len + k) * inner..(o * len + k + 1) * inner];
            out[o * inner..(o + 1) * inner]
                .iter_mut()
                .zip(src)
                .for_each(|(a, v)| *a += v);
        }
    }
    out.iter_mut().for_each(|v| *v *= scale);
    Tensor::new(removed_axis(t.shape(), axis), out)
}

pub(crate) fn softmax_backward(x: Var, axis: usize, out: &Tensor, gout: &Tensor, acc: &mut GradAcc) {
    let (outer, len, inner) = out.axis_split(axis, "softmax").expect("validated");
    let (y, g) = (out.data(), gout.data());
    let mut gx = vec![0.0; y.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * len + k) * inner + i;
            let dot: f64 = (0..len).map(|k| g[at(k)] * y[at(k)]).sum();
            for k in 0..len {
                gx[at(k)] = y[at(k)] * (g[at(k)] - dot);
            }
        }
    }
    acc.add_data(x, gx);
}

pub(crate) fn sum_backward(x: Var, axis: usize, tx: &Tensor, gout: &Tensor, scale: f64, acc: &mut GradAcc) {
    let (outer, len, inner) = tx.axis_split(axis, "sum").expect("validated");
    let g = gout.data();
    let mut gx = vec![0.0; tx.numel()];
    for o in 0..outer {
        for k in 0..len {
            let dst = &mut gx[(o * len + k) * inner..(o * len + k + 1) * inner];
            dst.iter_mut()
                .zip(&g[o * inner..(o + 1) * inner])
                .for_each(|(a, v)| *a = v * scale);
        }
    }
    acc.add_data(x, gx);
}

pub(crate) fn avg_pool2d_backward(x: Var, tx: &Tensor, kf: usize, kt: usize, gout: &Tensor, acc: &mut GradAcc) {
    let [b, c, f, t] = tx.dims4("avg_pool2d").expect("validated");
    let (fo, to) = (f / kf, t / kt);
    let norm = 1.0 / (kf * kt) as f64;
    let g = gout.data();
    let mut gx = vec![0.0; tx.numel()];
    for bc in 0..b * c {
        for i in 0..fo {
            for j in 0..to {
                let v = g[(bc * fo + i) * to + j] * norm;
                for di in 0..kf {
                    let row = bc * f * t + (i * kf + di) * t + j * kt;
                    gx[row..row + kt].iter_mut().for_each(|a| *a = v);
                }
            }
        }
    }
    acc.add_data(x, gx);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_of_equal_slice_is_uniform() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::full(&[2, 5], 3.3));
        let y = g.softmax(x, 1).unwrap();
        assert!(g.value(y).data().iter().all(|&v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn softmax_of_large_gap_is_one_hot() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::new(vec![2], vec![0.0, 1e4]).unwrap());
        let y = g.softmax(x, 0).unwrap();
        assert_eq!(g.value(y).data(), &[0.0, 1.0]);
    }

    #[test]
    fn mean_over_time_of_constant() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::full(&[2, 3, 4, 7], -1.25));
        let y = g.mean_axis(x, 3).unwrap();
        assert_eq!(g.shape(y), &[2, 3, 4]);
        assert!(g.value(y).data().iter().all(|&v| v == -1.25));
    }

    #[test]
    fn avg_pool_floors_remainder() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::from_fn(&[1, 1, 2, 5], |i| (i[2] * 5 + i[3]) as f64));
        let y = g.avg_pool2d(x, 2, 2).unwrap();
        assert_eq!(g.shape(y), &[1, 1, 1, 2]);
        assert_eq!(g.value(y).data(), &[3.0, 5.0]);
    }
}
