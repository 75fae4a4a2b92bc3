//! Named finite-difference suites over every differentiable op.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::gradcheck::{check, kink_gap};
use crate::graph::{Graph, Var};
use crate::ops::{BnMode, GruWeights};
use crate::tensor::Tensor;

/// Central-difference step.
pub const STEP: f64 = 1e-5;

pub type Build = Box<dyn Fn(&mut Graph, &[Var]) -> Result<Var>>;
pub type Case = Box<dyn Fn(&mut ChaCha8Rng) -> (Vec<Tensor>, Build)>;

/// Random instances of one op with the tolerance they must meet.
pub struct Suite {
    pub name: String,
    pub tol: f64,
    pub case: Case,
    /// Draws whose objective has a kink within the step are redrawn. Only
    /// composed modules need this; op suites place inputs away from kinks.
    pub redraw_kinks: bool,
}

/// Redraws allowed per seed before the seed counts as failed.
pub const MAX_REDRAWS: usize = 8;

impl Suite {
    pub fn new(name: &str, tol: f64, case: impl Fn(&mut ChaCha8Rng) -> (Vec<Tensor>, Build) + 'static) -> Self {
        Self {
            name: name.to_string(),
            tol,
            case: Box::new(case),
            redraw_kinks: false,
        }
    }

    pub fn with_kink_redraw(mut self) -> Self {
        self.redraw_kinks = true;
        self
    }
}

/// Worst relative error over the checked seeds.
#[derive(Clone, Debug)]
pub struct SuiteResult {
    pub name: String,
    pub tol: f64,
    pub seeds: u64,
    pub worst: f64,
    pub worst_seed: u64,
    /// Draws discarded for sitting on a kink.
    pub redrawn: usize,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.worst < self.tol
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 0x5eed)
}

/// Runs `suite` on seeds `0..seeds`.
pub fn run(suite: &Suite, seeds: u64) -> Result<SuiteResult> {
    let mut res = SuiteResult {
        name: suite.name.clone(),
        tol: suite.tol,
        seeds,
        worst: 0.0,
        worst_seed: 0,
        redrawn: 0,
    };
    for seed in 0..seeds {
        let mut r = rng(seed);
        let mut e;
        let mut draws = 0;
        loop {
            let (inputs, build) = (suite.case)(&mut r);
            e = check(&build, &inputs, seed, STEP)?.max_rel_error();
            if e < suite.tol || !suite.redraw_kinks || draws == MAX_REDRAWS || kink_gap(&build, &inputs, seed, STEP)? <= suite.tol {
                break;
            }
            draws += 1;
            res.redrawn += 1;
        }
        if e > res.worst || e.is_nan() {
            res.worst = if e.is_nan() { f64::INFINITY } else { e };
            res.worst_seed = seed;
        }
    }
    Ok(res)
}

fn dim(r: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
    r.random_range(lo..=hi)
}

fn shape(r: &mut ChaCha8Rng) -> Vec<usize> {
    vec![dim(r, 1, 3), dim(r, 1, 4), dim(r, 2, 5)]
}

/// Values bounded away from zero so kinked ops are differentiable there.
fn away_from_zero(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor {
    let mut t = Tensor::randn(shape, r);
    for v in t.data_mut() {
        if v.abs() < 0.05 {
            *v = if *v < 0.0 { -0.05 - *v } else { 0.05 + *v };
        }
    }
    t
}

fn gru_inputs(r: &mut ChaCha8Rng, b: usize, t: usize, d: usize, h: usize) -> Vec<Tensor> {
    vec![
        Tensor::randn(&[b, t, d], r),
        Tensor::randn(&[3 * h, d], r).map(|v| 0.5 * v),
        Tensor::randn(&[3 * h, h], r).map(|v| 0.5 * v),
        Tensor::randn(&[3 * h], r).map(|v| 0.5 * v),
        Tensor::randn(&[3 * h], r).map(|v| 0.5 * v),
    ]
}

fn gru_build(reverse: bool) -> Build {
    Box::new(move |g, v| {
        let w = GruWeights {
            w_ih: v[1],
            w_hh: v[2],
            b_ih: v[3],
            b_hh: v[4],
        };
        g.gru(v[0], w, reverse)
    })
}

/// Every op suite. Pointwise ops use `1e-6`, the rest `1e-5` or `1e-4`.
pub fn op_suites() -> Vec<Suite> {
    let mut s = Vec::new();
    for op in ["add", "sub", "mul", "div"] {
        s.push(Suite::new(op, 1e-6, move |r| {
            let sh = shape(r);
            let a = Tensor::randn(&sh, r);
            let b = match op {
                "div" => Tensor::randn(&sh, r).map(|v| v.signum() * (v.abs() + 0.5)),
                _ => Tensor::randn(&sh, r),
            };
            let build: Build = Box::new(move |g, v| match op {
                "add" => g.add(v[0], v[1]),
                "sub" => g.sub(v[0], v[1]),
                "mul" => g.mul(v[0], v[1]),
                _ => g.div(v[0], v[1]),
            });
            (vec![a, b], build)
        }));
    }
    for op in ["relu", "sigmoid", "tanh", "scale", "add_scalar"] {
        s.push(Suite::new(op, 1e-6, move |r| {
            let x = away_from_zero(&shape(r), r);
            let c: f64 = r.random_range(-2.0..2.0);
            let build: Build = Box::new(move |g, v| {
                Ok(match op {
                    "relu" => g.relu(v[0]),
                    "sigmoid" => g.sigmoid(v[0]),
                    "tanh" => g.tanh(v[0]),
                    "scale" => g.scale(v[0], c),
                    _ => g.add_scalar(v[0], c),
                })
            });
            (vec![x], build)
        }));
    }
    s.push(Suite::new("dropout", 1e-6, |r| {
        let x = Tensor::randn(&shape(r), r);
        let key: u64 = r.random();
        let build: Build = Box::new(move |g, v| g.dropout(v[0], 0.5, true, key));
        (vec![x], build)
    }));
    s.push(Suite::new("linear", 1e-6, |r| {
        let (n, d, o) = (dim(r, 1, 4), dim(r, 1, 5), dim(r, 1, 4));
        let x = Tensor::randn(&[dim(r, 1, 2), n, d], r);
        let w = Tensor::randn(&[o, d], r);
        let b = Tensor::randn(&[o], r);
        let build: Build = Box::new(|g, v| g.linear(v[0], v[1], Some(v[2])));
        (vec![x, w, b], build)
    }));
    s.push(Suite::new("conv2d", 1e-6, |r| {
        let (cin, cout) = (dim(r, 1, 3), dim(r, 1, 3));
        let k = [1, 3][dim(r, 0, 1)];
        let dil = dim(r, 1, 3);
        let bias = r.random_bool(0.5);
        let x = Tensor::randn(&[dim(r, 1, 2), cin, dim(r, 3, 7), dim(r, 2, 5)], r);
        let w = Tensor::randn(&[cout, cin, k, k], r);
        let b = Tensor::randn(&[cout], r);
        let build: Build = Box::new(move |g, v| g.conv2d(v[0], v[1], if bias { Some(v[2]) } else { None }, dil));
        (vec![x, w, b], build)
    }));
    s.push(Suite::new("conv2d_rect", 1e-6, |r| {
        let (cin, cout) = (dim(r, 1, 3), dim(r, 1, 3));
        let x = Tensor::randn(&[dim(r, 1, 2), cin, dim(r, 3, 6), dim(r, 1, 4)], r);
        let w = Tensor::randn(&[cout, cin, 3, 1], r);
        let build: Build = Box::new(|g, v| g.conv2d(v[0], v[1], None, 1));
        (vec![x, w], build)
    }));
    s.push(Suite::new("batch_norm2d", 1e-5, |r| {
        let c = dim(r, 1, 3);
        let x = Tensor::randn(&[2, c, dim(r, 1, 4), dim(r, 2, 5)], r);
        let gamma = Tensor::randn(&[c], r);
        let beta = Tensor::randn(&[c], r);
        let build: Build = Box::new(|g, v| Ok(g.batch_norm2d(v[0], v[1], v[2], BnMode::Train, 1e-5)?.0));
        (vec![x, gamma, beta], build)
    }));
    s.push(Suite::new("batch_norm", 1e-5, |r| {
        let c = dim(r, 1, 3);
        let x = Tensor::randn(&[dim(r, 2, 3), c, dim(r, 2, 5)], r);
        let gamma = Tensor::randn(&[c], r);
        let beta = Tensor::randn(&[c], r);
        let eval = r.random_bool(0.5);
        let rm: Vec<f64> = (0..c).map(|_| r.random_range(-1.0..1.0)).collect();
        let rv: Vec<f64> = (0..c).map(|_| r.random_range(0.5..2.0)).collect();
        let build: Build = Box::new(move |g, v| {
            let mode = if eval {
                BnMode::Eval {
                    running_mean: &rm,
                    running_var: &rv,
                }
            } else {
                BnMode::Train
            };
            Ok(g.batch_norm(v[0], v[1], v[2], mode, 1e-5)?.0)
        });
        (vec![x, gamma, beta], build)
    }));
    s.push(Suite::new("softmax", 1e-6, |r| {
        let sh = shape(r);
        let axis = dim(r, 0, 2);
        let x = Tensor::randn(&sh, r);
        let build: Build = Box::new(move |g, v| g.softmax(v[0], axis));
        (vec![x], build)
    }));
    for op in ["sum_axis", "mean_axis", "sum_all", "mean_all"] {
        s.push(Suite::new(op, 1e-6, move |r| {
            let sh = shape(r);
            let axis = dim(r, 0, 2);
            let x = Tensor::randn(&sh, r);
            let build: Build = Box::new(move |g, v| match op {
                "sum_axis" => g.sum_axis(v[0], axis),
                "mean_axis" => g.mean_axis(v[0], axis),
                "sum_all" => Ok(g.sum_all(v[0])),
                _ => Ok(g.mean_all(v[0])),
            });
            (vec![x], build)
        }));
    }
    s.push(Suite::new("avg_pool2d", 1e-6, |r| {
        let (kf, kt) = (dim(r, 1, 2), dim(r, 1, 2));
        let x = Tensor::randn(&[dim(r, 1, 2), dim(r, 1, 2), dim(r, 2, 5), dim(r, 2, 5)], r);
        let build: Build = Box::new(move |g, v| g.avg_pool2d(v[0], kf, kt));
        (vec![x], build)
    }));
    for op in ["reshape", "permute", "concat", "narrow", "expand"] {
        s.push(Suite::new(op, 1e-6, move |r| {
            let sh = shape(r);
            let x = Tensor::randn(&sh, r);
            let y = Tensor::randn(&sh, r);
            let start = dim(r, 0, sh[2] - 1);
            let len = dim(r, 1, sh[2] - start);
            let build: Build = Box::new(move |g, v| match op {
                "reshape" => {
                    let n = g.value(v[0]).numel();
                    g.reshape(v[0], &[n])
                }
                "permute" => g.permute(v[0], &[2, 0, 1]),
                "concat" => g.concat(&[v[0], v[1]], 1),
                "expand" => {
                    let m = g.mean_axis(v[0], 1)?;
                    let mut keep = g.shape(m).to_vec();
                    keep.insert(1, 1);
                    let m = g.reshape(m, &keep)?;
                    g.expand(m, 1, 3)
                }
                _ => g.narrow(v[0], 2, start, len),
            });
            (vec![x, y], build)
        }));
    }
    s.push(Suite::new("time_diff", 1e-6, |r| {
        let x = Tensor::randn(&shape(r), r);
        let build: Build = Box::new(|g, v| g.time_diff(v[0]));
        (vec![x], build)
    }));
    s.push(Suite::new("freq_blend", 1e-6, |r| {
        let k = dim(r, 1, 4);
        let (b, o, f, t) = (dim(r, 1, 2), dim(r, 1, 3), dim(r, 1, 4), dim(r, 1, 3));
        let mut inputs: Vec<Tensor> = (0..k).map(|_| Tensor::randn(&[b, o, f, t], r)).collect();
        inputs.push(Tensor::randn(&[b, k, f], r));
        let build: Build = Box::new(move |g, v| g.freq_blend(&v[..k], v[k]));
        (inputs, build)
    }));
    s.push(Suite::new("gru", 1e-5, |r| {
        let (b, t, d, h) = (dim(r, 1, 2), dim(r, 1, 4), dim(r, 1, 3), dim(r, 1, 3));
        let inputs = gru_inputs(r, b, t, d, h);
        (inputs, gru_build(r.random_bool(0.5)))
    }));
    s.push(Suite::new("bce", 1e-6, |r| {
        let sh = shape(r);
        let p = Tensor::from_fn(&sh, |_| r.random_range(0.05..0.95));
        let y = Tensor::from_fn(&sh, |_| r.random_range(0.0..1.0));
        let build: Build = Box::new(move |g, v| g.bce(v[0], &y));
        (vec![p], build)
    }));
    s.push(Suite::new("mse", 1e-6, |r| {
        let sh = shape(r);
        let a = Tensor::randn(&sh, r);
        let b = Tensor::randn(&sh, r);
        let build: Build = Box::new(|g, v| g.mse(v[0], v[1]));
        (vec![a, b], build)
    }));
    s.push(Suite::new("chain", 1e-4, |r| {
        let x = Tensor::randn(&[2, 2, 4, 3], r);
        let w = Tensor::randn(&[3, 2, 3, 3], r);
        let gamma = Tensor::randn(&[3], r);
        let beta = Tensor::randn(&[3], r);
        let build: Build = Box::new(|g, v| {
            let y = g.conv2d(v[0], v[1], None, 2)?;
            let (y, _) = g.batch_norm2d(y, v[2], v[3], BnMode::Train, 1e-5)?;
            let y = g.sigmoid(y);
            let y = g.avg_pool2d(y, 2, 1)?;
            let s = g.softmax(y, 3)?;
            let y = g.mul(y, s)?;
            g.sum_axis(y, 3)
        });
        (vec![x, w, gamma, beta], build)
    }));
    s
}
