use super::gemm::gemm;
use super::Op;
use crate::error::{invalid, shape_err, Result};
use crate::graph::{GradAcc, Graph, Var};
use crate::tensor::Tensor;

/// Geometry of a same-padded 2-D convolution over `(frequency, time)` with
/// dilation applied on the frequency axis only.
#[derive(Clone, Copy)]
struct ConvGeom {
    cin: usize,
    f: usize,
    t: usize,
    kf: usize,
    kt: usize,
    dil: usize,
}

impl ConvGeom {
    fn rows(&self) -> usize {
        self.cin * self.kf * self.kt
    }

    fn pointwise(&self) -> bool {
        self.kf == 1 && self.kt == 1
    }

    /// Output-to-input offsets `(df, dt)` of tap `(i, j)`.
    fn tap_offset(&self, i: usize, j: usize) -> (isize, isize) {
        let pf = (self.dil * (self.kf - 1) / 2) as isize;
        let pt = ((self.kt - 1) / 2) as isize;
        ((i * self.dil) as isize - pf, j as isize - pt)
    }

    /// Valid output range `[lo, hi)` along an axis of length `n` for offset `off`.
    fn valid(n: usize, off: isize) -> (usize, usize) {
        let lo = (-off).max(0) as usize;
        let hi = (n as isize - off).clamp(0, n as isize) as usize;
        (lo.min(hi), hi)
    }

    fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        let ft = self.f * self.t;
        for c in 0..self.cin {
            for i in 0..self.kf {
                for j in 0..self.kt {
                    let row = (c * self.kf + i) * self.kt + j;
                    let dst = &mut cols[row * ft..(row + 1) * ft];
                    dst.fill(0.0);
                    let (df, dt) = self.tap_offset(i, j);
                    let (f0, f1) = Self::valid(self.f, df);
                    let (t0, t1) = Self::valid(self.t, dt);
                    for fo in f0..f1 {
                        let fi = (fo as isize + df) as usize;
                        let src = &x[c * ft + fi * self.t..];
                        for to in t0..t1 {
                            dst[fo * self.t + to] = src[(to as isize + dt) as usize];
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[f64], gx: &mut [f64]) {
        let ft = self.f * self.t;
        for c in 0..self.cin {
            for i in 0..self.kf {
                for j in 0..self.kt {
                    let row = (c * self.kf + i) * self.kt + j;
                    let src = &cols[row * ft..(row + 1) * ft];
                    let (df, dt) = self.tap_offset(i, j);
                    let (f0, f1) = Self::valid(self.f, df);
                    let (t0, t1) = Self::valid(self.t, dt);
                    for fo in f0..f1 {
                        let fi = (fo as isize + df) as usize;
                        let dst = &mut gx[c * ft + fi * self.t..];
                        for to in t0..t1 {
                            dst[(to as isize + dt) as usize] += src[fo * self.t + to];
                        }
                    }
                }
            }
        }
    }
}

fn check_conv(x: &Tensor, w: &Tensor, b: Option<&Tensor>, dilation: usize) -> Result<(usize, usize, ConvGeom)> {
    let [bsz, cin, f, t] = x.dims4("conv2d")?;
    let [cout, wcin, kf, kt] = w.dims4("conv2d")?;
    if wcin != cin {
        return Err(shape_err(
            "conv2d",
            format!("input has {} channels but weight {:?} expects {}", cin, w.shape(), wcin),
        ));
    }
    if kf % 2 == 0 || kt % 2 == 0 {
        return Err(shape_err("conv2d", format!("kernel extents must be odd, got {}x{}", kf, kt)));
    }
    if dilation == 0 {
        return Err(invalid("conv2d", "frequency dilation must be >= 1"));
    }
    if let Some(b) = b {
        if b.shape() != [cout] {
            return Err(shape_err(
                "conv2d",
                format!("bias shape {:?} does not match {} output channels", b.shape(), cout),
            ));
        }
    }
    Ok((bsz, cout, ConvGeom { cin, f, t, kf, kt, dil: dilation }))
}

impl Graph {
    /// Zero-padded "same" 2-D cross-correlation on `[B, Cin, F, T]` input with
    /// weight `[Cout, Cin, kF, kT]` (odd extents) and frequency dilation.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, dilation: usize) -> Result<Var> {
        let (tx, tw) = (self.value(x), self.value(w));
        let tb = b.map(|b| self.value(b));
        let (bsz, cout, geom) = check_conv(tx, tw, tb, dilation)?;
        let ft = geom.f * geom.t;
        let rows = geom.rows();
        let mut out = vec![0.0; bsz * cout * ft];
        let mut cols = if geom.pointwise() { Vec::new() } else { vec![0.0; rows * ft] };
        for bi in 0..bsz {
            let xb = &tx.data()[bi * geom.cin * ft..(bi + 1) * geom.cin * ft];
            let src: &[f64] = if geom.pointwise() {
                xb
            } else {
                geom.im2col(xb, &mut cols);
                &cols
            };
            let ob = &mut out[bi * cout * ft..(bi + 1) * cout * ft];
            gemm(cout, rows, ft, tw.data(), false, src, false, 0.0, ob);
            if let Some(tb) = tb {
                for (o, &bias) in ob.chunks_mut(ft).zip(tb.data()) {
                    o.iter_mut().for_each(|v| *v += bias);
                }
            }
        }
        let out = Tensor::new(vec![bsz, cout, geom.f, geom.t], out)?;
        Ok(self.push(out, Op::Conv2d { x, w, b, dilation }))
    }

    /// Affine map over the last axis: `x[..., D] · Wᵀ + b` with `W: [O, D]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (tx, tw) = (self.value(x), self.value(w));
        let d = *tx.shape().last().ok_or_else(|| shape_err("linear", "input is a scalar"))?;
        let (o, wd) = match tw.shape() {
            &[o, wd] => (o, wd),
            s => return Err(shape_err("linear", format!("weight must be rank 2, got {:?}", s))),
        };
        if wd != d {
            return Err(shape_err("linear", format!("input width {} vs weight {:?}", d, tw.shape())));
        }
        let rows = tx.numel() / d.max(1);
        let mut out = vec![0.0; rows * o];
        gemm(rows, d, o, tx.data(), false, tw.data(), true, 0.0, &mut out);
        if let Some(b) = b {
            let tb = self.value(b);
            if tb.shape() != [o] {
                return Err(shape_err("linear", format!("bias {:?} vs {} outputs", tb.shape(), o)));
            }
            for row in out.chunks_mut(o) {
                row.iter_mut().zip(tb.data()).for_each(|(v, b)| *v += b);
            }
        }
        let mut shape = tx.shape().to_vec();
        *shape.last_mut().unwrap() = o;
        let out = Tensor::new(shape, out)?;
        Ok(self.push(out, Op::Linear { x, w, b }))
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward(
    tx: &Tensor,
    tw: &Tensor,
    x: Var,
    w: Var,
    b: Option<Var>,
    dilation: usize,
    gout: &Tensor,
    acc: &mut GradAcc,
) {
    let (bsz, cout, geom) = check_conv(tx, tw, None, dilation).expect("validated in forward");
    let ft = geom.f * geom.t;
    let rows = geom.rows();
    let want_x = acc.wants(x);
    let want_w = acc.wants(w);
    let mut gw = vec![0.0; tw.numel()];
    let mut gx = vec![0.0; if want_x { tx.numel() } else { 0 }];
    let mut cols = if geom.pointwise() { Vec::new() } else { vec![0.0; rows * ft] };
    let mut gcols = vec![0.0; if want_x && !geom.pointwise() { rows * ft } else { 0 }];
    for bi in 0..bsz {
        let gb = &gout.data()[bi * cout * ft..(bi + 1) * cout * ft];
        if want_w {
            let xb = &tx.data()[bi * geom.cin * ft..(bi + 1) * geom.cin * ft];
            let src: &[f64] = if geom.pointwise() {
                xb
            } else {
                geom.im2col(xb, &mut cols);
                &cols
            };
            gemm(cout, ft, rows, gb, false, src, true, 1.0, &mut gw);
        }
        if want_x {
            let gxb = &mut gx[bi * geom.cin * ft..(bi + 1) * geom.cin * ft];
            if geom.pointwise() {
                gemm(rows, cout, ft, tw.data(), true, gb, false, 0.0, gxb);
            } else {
                gemm(rows, cout, ft, tw.data(), true, gb, false, 0.0, &mut gcols);
                geom.col2im(&gcols, gxb);
            }
        }
    }
    if want_x {
        acc.add_data(x, gx);
    }
    if want_w {
        acc.add_data(w, gw);
    }
    if let Some(b) = b {
        if acc.wants(b) {
            let mut gbias = vec![0.0; cout];
            for (i, chunk) in gout.data().chunks(ft).enumerate() {
                gbias[i % cout] += chunk.iter().sum::<f64>();
            }
            acc.add_data(b, gbias);
        }
    }
}

pub(crate) fn linear_backward(
    tx: &Tensor,
    tw: &Tensor,
    x: Var,
    w: Var,
    b: Option<Var>,
    gout: &Tensor,
    acc: &mut GradAcc,
) {
    let d = *tx.shape().last().unwrap();
    let o = tw.shape()[0];
    let rows = tx.numel() / d.max(1);
    if acc.wants(x) {
        let mut gx = vec![0.0; tx.numel()];
        gemm(rows, o, d, gout.data(), false, tw.data(), false, 0.0, &mut gx);
        acc.add_data(x, gx);
    }
    if acc.wants(w) {
        let mut gw = vec![0.0; tw.numel()];
        gemm(o, rows, d, gout.data(), true, tx.data(), false, 0.0, &mut gw);
        acc.add_data(w, gw);
    }
    if let Some(b) = b {
        if acc.wants(b) {
            let mut gb = vec![0.0; o];
            for row in gout.data().chunks(o) {
                gb.iter_mut().zip(row).for_each(|(a, g)| *a += g);
            }
            acc.add_data(b, gb);
        }
    }
}
