use super::Op;
use crate::error::{invalid, shape_err, Result};
use crate::graph::{GradAcc, Graph, Var};
use crate::tensor::Tensor;

impl Graph {
    /// First difference along the last axis, `out[t] = x[t] - x[t-1]`,
    /// with `out[0] = 0`.
    pub fn time_diff(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        let t = *tx
            .shape()
            .last()
            .ok_or_else(|| invalid("time_diff", "scalar input"))?;
        let d = tx.data();
        let mut out = vec![0.0; d.len()];
        if t > 0 {
            for (o, row) in out.chunks_mut(t).zip(d.chunks(t)) {
                for i in 1..t {
                    o[i] = row[i] - row[i - 1];
                }
            }
        }
        let out = Tensor::new(tx.shape().to_vec(), out)?;
        Ok(self.push(out, Op::TimeDiff(x)))
    }

    /// Frequency-wise mixture of branch outputs:
    /// `out[b,o,f,t] = sum_k att[b,k,f] * y_k[b,o,f,t]`.
    pub fn freq_blend(&mut self, branches: &[Var], att: Var) -> Result<Var> {
        let first = *branches.first().ok_or_else(|| invalid("freq_blend", "no branches"))?;
        let [b, o, f, t] = self.value(first).dims4("freq_blend")?;
        for &v in branches {
            if self.shape(v) != [b, o, f, t] {
                return Err(shape_err("freq_blend", format!("branch shape {:?}", self.shape(v))));
            }
        }
        let k = branches.len();
        if self.shape(att) != [b, k, f] {
            return Err(shape_err(
                "freq_blend",
                format!("attention {:?}, expected [{}, {}, {}]", self.shape(att), b, k, f),
            ));
        }
        let a = self.value(att).data();
        let mut out = vec![0.0; b * o * f * t];
        for (ki, &v) in branches.iter().enumerate() {
            let y = self.value(v).data();
            for bi in 0..b {
                for oi in 0..o {
                    for fi in 0..f {
                        let w = a[(bi * k + ki) * f + fi];
                        let base = ((bi * o + oi) * f + fi) * t;
                        for ti in 0..t {
                            out[base + ti] += w * y[base + ti];
                        }
                    }
                }
            }
        }
        let out = Tensor::new(vec![b, o, f, t], out)?;
        Ok(self.push(
            out,
            Op::FreqBlend {
                branches: branches.to_vec(),
                att,
            },
        ))
    }
}

pub(crate) fn time_diff_backward(x: Var, gout: &Tensor, acc: &mut GradAcc) {
    let t = *gout.shape().last().expect("validated");
    let g = gout.data();
    let mut gx = vec![0.0; g.len()];
    if t > 0 {
        for (o, row) in gx.chunks_mut(t).zip(g.chunks(t)) {
            for i in 1..t {
                o[i] += row[i];
                o[i - 1] -= row[i];
            }
        }
    }
    acc.add_data(x, gx);
}

pub(crate) fn freq_blend_backward<'a>(
    branches: &[Var],
    att: Var,
    val: &impl Fn(&Var) -> &'a Tensor,
    gout: &Tensor,
    acc: &mut GradAcc,
) {
    let [b, o, f, t] = gout.dims4("freq_blend").expect("validated");
    let k = branches.len();
    let a = val(&att).data();
    let g = gout.data();
    let mut gatt = vec![0.0; b * k * f];
    for (ki, v) in branches.iter().enumerate() {
        let y = val(v).data();
        let want_y = acc.wants(*v);
        let mut gy = if want_y { vec![0.0; g.len()] } else { Vec::new() };
        for bi in 0..b {
            for oi in 0..o {
                for fi in 0..f {
                    let w = a[(bi * k + ki) * f + fi];
                    let base = ((bi * o + oi) * f + fi) * t;
                    let mut s = 0.0;
                    for ti in 0..t {
                        s += g[base + ti] * y[base + ti];
                    }
                    gatt[(bi * k + ki) * f + fi] += s;
                    if want_y {
                        for ti in 0..t {
                            gy[base + ti] = w * g[base + ti];
                        }
                    }
                }
            }
        }
        if want_y {
            acc.add_data(*v, gy);
        }
    }
    acc.add_data(att, gatt);
}
