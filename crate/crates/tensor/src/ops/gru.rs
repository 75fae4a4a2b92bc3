//! Single-direction GRU over `[B, T, D]` sequences with gate order `r, z, n`:
//!
//! ```text
//! r = σ(W_ir x + b_ir + W_hr h + b_hr)
//! z = σ(W_iz x + b_iz + W_hz h + b_hz)
//! n = tanh(W_in x + b_in + r ⊙ (W_hn h + b_hn))
//! h' = (1 - z) ⊙ n + z ⊙ h
//! ```
//!
//! The initial state is zero. Backward is exact BPTT over the cached gates.

use super::elementwise::sigmoid;
use super::gemm::gemm;
use super::Op;
use crate::error::{shape_err, Result};
use crate::graph::{GradAcc, Graph, Var};
use crate::tensor::Tensor;

pub(crate) struct GruRecord {
    x: Var,
    w_ih: Var,
    w_hh: Var,
    b_ih: Var,
    b_hh: Var,
    reverse: bool,
    /// Per processing step, `[B, H]` each.
    r: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    n: Vec<Vec<f64>>,
    hn: Vec<Vec<f64>>,
    h_prev: Vec<Vec<f64>>,
}

impl GruRecord {
    pub(crate) fn inputs(&self) -> Vec<Var> {
        vec![self.x, self.w_ih, self.w_hh, self.b_ih, self.b_hh]
    }
}

/// Weight handles of one GRU direction.
#[derive(Clone, Copy, Debug)]
pub struct GruWeights {
    /// `[3H, D]`
    pub w_ih: Var,
    /// `[3H, H]`
    pub w_hh: Var,
    /// `[3H]`
    pub b_ih: Var,
    /// `[3H]`
    pub b_hh: Var,
}

fn time_order(t: usize, reverse: bool) -> Vec<usize> {
    if reverse {
        (0..t).rev().collect()
    } else {
        (0..t).collect()
    }
}

impl Graph {
    /// Runs one GRU direction over `x: [B, T, D]`, returning `[B, T, H]`
    /// aligned with the input time axis.
    pub fn gru(&mut self, x: Var, w: GruWeights, reverse: bool) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 {
            return Err(shape_err("gru", format!("input must be [B, T, D], got {:?}", xs)));
        }
        let (b, t, d) = (xs[0], xs[1], xs[2]);
        let wih = self.shape(w.w_ih).to_vec();
        if wih.len() != 2 || wih[0] % 3 != 0 || wih[1] != d {
            return Err(shape_err("gru", format!("w_ih {:?} for input width {}", wih, d)));
        }
        let h = wih[0] / 3;
        if self.shape(w.w_hh) != [3 * h, h] {
            return Err(shape_err("gru", format!("w_hh {:?}, expected [{}, {}]", self.shape(w.w_hh), 3 * h, h)));
        }
        for bias in [w.b_ih, w.b_hh] {
            if self.shape(bias) != [3 * h] {
                return Err(shape_err("gru", format!("bias {:?}, expected [{}]", self.shape(bias), 3 * h)));
            }
        }
        let g3 = 3 * h;
        let mut gi = vec![0.0; b * t * g3];
        gemm(b * t, d, g3, self.value(x).data(), false, self.value(w.w_ih).data(), true, 0.0, &mut gi);
        let bih = self.value(w.b_ih).data();
        for row in gi.chunks_mut(g3) {
            row.iter_mut().zip(bih).for_each(|(a, bv)| *a += bv);
        }
        let whh = self.value(w.w_hh).data();
        let bhh = self.value(w.b_hh).data();

        let mut out = vec![0.0; b * t * h];
        let mut hcur = vec![0.0; b * h];
        let order = time_order(t, reverse);
        let (mut rs, mut zs, mut ns, mut hns, mut hps) = (
            Vec::with_capacity(t),
            Vec::with_capacity(t),
            Vec::with_capacity(t),
            Vec::with_capacity(t),
            Vec::with_capacity(t),
        );
        let mut gh = vec![0.0; b * g3];
        for &ti in &order {
            gemm(b, h, g3, &hcur, false, whh, true, 0.0, &mut gh);
            let (mut r, mut z, mut n, mut hn) =
                (vec![0.0; b * h], vec![0.0; b * h], vec![0.0; b * h], vec![0.0; b * h]);
            let mut hnew = vec![0.0; b * h];
            for bi in 0..b {
                let gir = &gi[(bi * t + ti) * g3..(bi * t + ti + 1) * g3];
                let ghr = &gh[bi * g3..(bi + 1) * g3];
                for j in 0..h {
                    let k = bi * h + j;
                    r[k] = sigmoid(gir[j] + ghr[j] + bhh[j]);
                    z[k] = sigmoid(gir[h + j] + ghr[h + j] + bhh[h + j]);
                    hn[k] = ghr[2 * h + j] + bhh[2 * h + j];
                    n[k] = (gir[2 * h + j] + r[k] * hn[k]).tanh();
                    hnew[k] = (1.0 - z[k]) * n[k] + z[k] * hcur[k];
                    out[(bi * t + ti) * h + j] = hnew[k];
                }
            }
            rs.push(r);
            zs.push(z);
            ns.push(n);
            hns.push(hn);
            hps.push(std::mem::replace(&mut hcur, hnew));
        }
        let out = Tensor::new(vec![b, t, h], out)?;
        let rec = GruRecord {
            x,
            w_ih: w.w_ih,
            w_hh: w.w_hh,
            b_ih: w.b_ih,
            b_hh: w.b_hh,
            reverse,
            r: rs,
            z: zs,
            n: ns,
            hn: hns,
            h_prev: hps,
        };
        Ok(self.push(out, Op::Gru(Box::new(rec))))
    }
}

pub(crate) fn backward<'a>(
    rec: &GruRecord,
    val: &impl Fn(&Var) -> &'a Tensor,
    out: &Tensor,
    gout: &Tensor,
    acc: &mut GradAcc,
) {
    let (b, t, h) = (out.shape()[0], out.shape()[1], out.shape()[2]);
    let tx = val(&rec.x);
    let d = tx.shape()[2];
    let g3 = 3 * h;
    let whh = val(&rec.w_hh).data();
    let g = gout.data();
    let order = time_order(t, rec.reverse);

    let mut dgi = vec![0.0; b * t * g3];
    let mut dwhh = vec![0.0; g3 * h];
    let mut dbhh = vec![0.0; g3];
    let mut dh = vec![0.0; b * h];
    let mut dgh = vec![0.0; b * g3];
    for (step, &ti) in order.iter().enumerate().rev() {
        let (r, z, n, hn, hp) = (&rec.r[step], &rec.z[step], &rec.n[step], &rec.hn[step], &rec.h_prev[step]);
        for bi in 0..b {
            for j in 0..h {
                let k = bi * h + j;
                let dhk = dh[k] + g[(bi * t + ti) * h + j];
                let dn = dhk * (1.0 - z[k]);
                let dz = dhk * (hp[k] - n[k]);
                dh[k] = dhk * z[k];
                let dan = dn * (1.0 - n[k] * n[k]);
                let dr = dan * hn[k];
                let dr_pre = dr * r[k] * (1.0 - r[k]);
                let dz_pre = dz * z[k] * (1.0 - z[k]);
                let gi_row = (bi * t + ti) * g3;
                dgi[gi_row + j] = dr_pre;
                dgi[gi_row + h + j] = dz_pre;
                dgi[gi_row + 2 * h + j] = dan;
                let gh_row = bi * g3;
                dgh[gh_row + j] = dr_pre;
                dgh[gh_row + h + j] = dz_pre;
                dgh[gh_row + 2 * h + j] = dan * r[k];
            }
        }
        gemm(b, g3, h, &dgh, false, whh, false, 1.0, &mut dh);
        gemm(g3, b, h, &dgh, true, hp, false, 1.0, &mut dwhh);
        for row in dgh.chunks(g3) {
            dbhh.iter_mut().zip(row).for_each(|(a, v)| *a += v);
        }
    }
    if acc.wants(rec.x) {
        let mut dx = vec![0.0; b * t * d];
        gemm(b * t, g3, d, &dgi, false, val(&rec.w_ih).data(), false, 0.0, &mut dx);
        acc.add_data(rec.x, dx);
    }
    if acc.wants(rec.w_ih) {
        let mut dwih = vec![0.0; g3 * d];
        gemm(g3, b * t, d, &dgi, true, tx.data(), false, 0.0, &mut dwih);
        acc.add_data(rec.w_ih, dwih);
    }
    if acc.wants(rec.b_ih) {
        let mut dbih = vec![0.0; g3];
        for row in dgi.chunks(g3) {
            dbih.iter_mut().zip(row).for_each(|(a, v)| *a += v);
        }
        acc.add_data(rec.b_ih, dbih);
    }
    acc.add_data(rec.w_hh, dwhh);
    acc.add_data(rec.b_hh, dbhh);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn weights(g: &mut Graph, d: usize, h: usize, fill: f64) -> GruWeights {
        GruWeights {
            w_ih: g.leaf(Tensor::full(&[3 * h, d], fill)),
            w_hh: g.leaf(Tensor::full(&[3 * h, h], fill)),
            b_ih: g.leaf(Tensor::zeros(&[3 * h])),
            b_hh: g.leaf(Tensor::zeros(&[3 * h])),
        }
    }

    #[test]
    fn zero_weights_give_half_decay_towards_zero() {
        // r = z = 0.5, n = 0, so every state is zero.
        let mut g = Graph::new();
        let x = g.leaf(Tensor::full(&[1, 3, 2], 1.0));
        let w = weights(&mut g, 2, 4, 0.0);
        let y = g.gru(x, w, false).unwrap();
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_step_matches_hand_computation() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::full(&[1, 1, 1], 2.0));
        let w = weights(&mut g, 1, 1, 0.5);
        let y = g.gru(x, w, false).unwrap();
        let z = sigmoid(1.0);
        let n = (1.0f64).tanh();
        assert!((g.value(y).item() - (1.0 - z) * n).abs() < 1e-15);
    }

    #[test]
    fn reverse_direction_reads_input_backwards() {
        let seq = [0.3, -1.2, 0.7, 2.0];
        let run = |data: Vec<f64>, reverse: bool| {
            let mut g = Graph::new();
            let x = g.leaf(Tensor::new(vec![1, 4, 1], data).unwrap());
            let w = weights(&mut g, 1, 2, 0.4);
            let y = g.gru(x, w, reverse).unwrap();
            g.value(y).clone()
        };
        let fwd = run(seq.to_vec(), false);
        let rev = run(seq.iter().rev().copied().collect(), true);
        for ti in 0..4 {
            for j in 0..2 {
                assert!((fwd.get(&[0, ti, j]) - rev.get(&[0, 3 - ti, j])).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mismatched_weights_are_rejected() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::zeros(&[1, 2, 3]));
        let w = weights(&mut g, 2, 4, 0.0);
        assert!(g.gru(x, w, false).is_err());
    }
}
