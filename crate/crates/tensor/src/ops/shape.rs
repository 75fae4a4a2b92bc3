use super::Op;
use crate::error::{invalid, shape_err, Result};
use crate::graph::{GradAcc, Graph, Var};
use crate::tensor::Tensor;

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Gathers `src` into the layout `out[idx] = src[idx permuted back]`.
fn permute_data(src: &[f64], shape: &[usize], perm: &[usize]) -> (Vec<usize>, Vec<f64>) {
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let in_strides = strides(shape);
    let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let mut out = Vec::with_capacity(src.len());
    let mut idx = vec![0usize; shape.len()];
    let mut off = 0usize;
    for _ in 0..src.len() {
        out.push(src[off]);
        for d in (0..idx.len()).rev() {
            idx[d] += 1;
            off += src_strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            off -= src_strides[d] * out_shape[d];
            idx[d] = 0;
        }
    }
    (out_shape, out)
}

fn check_perm(perm: &[usize], ndim: usize) -> Result<()> {
    let mut seen = vec![false; ndim];
    if perm.len() != ndim {
        return Err(invalid("permute", format!("{:?} for rank {}", perm, ndim)));
    }
    for &p in perm {
        if p >= ndim || seen[p] {
            return Err(invalid("permute", format!("{:?} is not a permutation", perm)));
        }
        seen[p] = true;
    }
    Ok(())
}

impl Graph {
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        Ok(self.push(out, Op::Reshape(x)))
    }

    /// Reorders axes so that output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let tx = self.value(x);
        check_perm(perm, tx.ndim())?;
        if perm.iter().enumerate().all(|(i, &p)| i == p) {
            return Ok(x);
        }
        let (shape, data) = permute_data(tx.data(), tx.shape(), perm);
        let out = Tensor::new(shape, data)?;
        Ok(self.push(
            out,
            Op::Permute {
                x,
                perm: perm.to_vec(),
            },
        ))
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = xs.first().ok_or_else(|| invalid("concat", "no inputs"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(invalid("concat", format!("axis {} for rank {}", axis, base.len())));
        }
        let mut total = 0;
        for &v in xs {
            let s = self.shape(v);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(shape_err("concat", format!("{:?} vs {:?} on axis {}", s, base, axis)));
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in xs {
                let len = self.shape(v)[axis] * inner;
                data.extend_from_slice(&self.value(v).data()[o * len..(o + 1) * len]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let out = Tensor::new(shape, data)?;
        Ok(self.push(
            out,
            Op::Concat {
                xs: xs.to_vec(),
                axis,
            },
        ))
    }

    /// Repeats a size-1 `axis` `n` times.
    pub fn expand(&mut self, x: Var, axis: usize, n: usize) -> Result<Var> {
        let tx = self.value(x);
        let (outer, len, inner) = tx.axis_split(axis, "expand")?;
        if len != 1 {
            return Err(shape_err("expand", format!("axis {} of {:?} is not 1", axis, tx.shape())));
        }
        let d = tx.data();
        let mut data = Vec::with_capacity(outer * n * inner);
        for o in 0..outer {
            for _ in 0..n {
                data.extend_from_slice(&d[o * inner..(o + 1) * inner]);
            }
        }
        let mut shape = tx.shape().to_vec();
        shape[axis] = n;
        let out = Tensor::new(shape, data)?;
        Ok(self.push(out, Op::Expand { x, axis }))
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let tx = self.value(x);
        let (outer, n, inner) = tx.axis_split(axis, "narrow")?;
        if start + len > n {
            return Err(invalid("narrow", format!("[{}, {}) exceeds axis length {}", start, start + len, n)));
        }
        let d = tx.data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            data.extend_from_slice(&d[(o * n + start) * inner..(o * n + start + len) * inner]);
        }
        let mut shape = tx.shape().to_vec();
        shape[axis] = len;
        let out = Tensor::new(shape, data)?;
        Ok(self.push(out, Op::Narrow { x, axis, start }))
    }
}

pub(crate) fn permute_backward(x: Var, tx: &Tensor, perm: &[usize], gout: &Tensor, acc: &mut GradAcc) {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    let (shape, data) = permute_data(gout.data(), gout.shape(), &inv);
    debug_assert_eq!(shape, tx.shape());
    acc.add_data(x, data);
}

pub(crate) fn concat_backward<'a>(
    xs: &[Var],
    axis: usize,
    val: &impl Fn(&Var) -> &'a Tensor,
    gout: &Tensor,
    acc: &mut GradAcc,
) {
    let shape = gout.shape();
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let row = shape[axis] * inner;
    let g = gout.data();
    let mut at = 0;
    for v in xs {
        let len = val(v).shape()[axis] * inner;
        if acc.wants(*v) {
            let mut data = Vec::with_capacity(outer * len);
            for o in 0..outer {
                data.extend_from_slice(&g[o * row + at..o * row + at + len]);
            }
            acc.add_data(*v, data);
        }
        at += len;
    }
}

pub(crate) fn narrow_backward(x: Var, tx: &Tensor, axis: usize, start: usize, gout: &Tensor, acc: &mut GradAcc) {
    let (outer, n, inner) = tx.axis_split(axis, "narrow").expect("validated");
    let len = gout.shape()[axis];
    let g = gout.data();
    let mut gx = vec![0.0; tx.numel()];
    for o in 0..outer {
        gx[(o * n + start) * inner..(o * n + start + len) * inner]
            .copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
    }
    acc.add_data(x, gx);
}

pub(crate) fn expand_backward(x: Var, axis: usize, gout: &Tensor, acc: &mut GradAcc) {
    let (outer, n, inner) = gout.axis_split(axis, "expand").expect("validated");
    let g = gout.data();
    let mut gx = vec![0.0; outer * inner];
    for o in 0..outer {
        for k in 0..n {
            let src = &g[(o * n + k) * inner..(o * n + k + 1) * inner];
            gx[o * inner..(o + 1) * inner].iter_mut().zip(src).for_each(|(a, b)| *a += b);
        }
    }
    acc.add_data(x, gx);
}
