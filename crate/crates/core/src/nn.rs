//! Parameterized building blocks shared by the layer variants and the model.

use std::collections::HashMap;

use rand_chacha::ChaCha8Rng;
use sed_tensor::rng::{stream_key, stream_rng};
use sed_tensor::{BatchStats, BnMode, Graph, GruWeights, ParamId, ParamStore, Tensor, Var};

use crate::error::Result;

/// Running-statistic update recorded by a train-mode batch norm.
#[derive(Clone, Debug)]
pub struct BnUpdate {
    pub mean: ParamId,
    pub var: ParamId,
    pub stats: BatchStats,
}

/// State threaded through one forward pass.
pub struct ForwardCtx<'a> {
    pub g: &'a mut Graph,
    pub store: &'a ParamStore,
    pub train: bool,
    pub seed: u64,
    pub step: u64,
    /// Prefix of dropout stream names, so student and teacher draw apart.
    pub tag: String,
    pub bn_updates: Vec<BnUpdate>,
    cache: HashMap<ParamId, Var>,
}

impl<'a> ForwardCtx<'a> {
    pub fn new(g: &'a mut Graph, store: &'a ParamStore, train: bool) -> Self {
        Self {
            g,
            store,
            train,
            seed: 0,
            step: 0,
            tag: "model".to_string(),
            bn_updates: Vec::new(),
            cache: HashMap::new(),
        }
    }

    pub fn with_stream(mut self, seed: u64, step: u64, tag: &str) -> Self {
        self.seed = seed;
        self.step = step;
        self.tag = tag.to_string();
        self
    }

    /// Uses `var` in place of parameter `id` (finite-difference checks).
    pub fn bind(&mut self, id: ParamId, var: Var) {
        self.cache.insert(id, var);
    }

    /// Parameter `id` on the tape, loaded once per pass.
    pub fn p(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.cache.get(&id) {
            return v;
        }
        let v = self.g.param(self.store, id);
        self.cache.insert(id, v);
        v
    }

    pub fn dropout(&mut self, x: Var, p: f64, site: &str) -> Result<Var> {
        let key = stream_key(self.seed, &format!("{}.{}", self.tag, site), self.step);
        Ok(self.g.dropout(x, p, self.train, key)?)
    }
}

/// Blends recorded batch statistics into the running buffers:
/// `running = (1 - momentum) * running + momentum * batch`.
pub fn apply_bn_updates(store: &mut ParamStore, updates: &[BnUpdate], momentum: f64) {
    for u in updates {
        for (id, batch) in [(u.mean, &u.stats.mean), (u.var, &u.stats.var)] {
            let t = store.tensor_mut(id);
            for (r, b) in t.data_mut().iter_mut().zip(batch) {
                *r = (1.0 - momentum) * *r + momentum * b;
            }
        }
    }
}

/// Registers parameters with deterministic initial values.
pub struct Init<'a> {
    pub store: &'a mut ParamStore,
    rng: ChaCha8Rng,
}

impl<'a> Init<'a> {
    pub fn new(store: &'a mut ParamStore, seed: u64) -> Self {
        Self {
            store,
            rng: stream_rng(stream_key(seed, "init", 0)),
        }
    }

    /// Kaiming-uniform weight, bound `sqrt(6 / fan_in)`.
    pub fn kaiming(&mut self, name: &str, shape: &[usize], fan_in: usize) -> Result<ParamId> {
        self.uniform(name, shape, (6.0 / fan_in as f64).sqrt())
    }

    pub fn uniform(&mut self, name: &str, shape: &[usize], bound: f64) -> Result<ParamId> {
        let t = Tensor::uniform(shape, bound, &mut self.rng);
        Ok(self.store.add(name, t)?)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> Result<ParamId> {
        Ok(self.store.add(name, Tensor::full(shape, value))?)
    }

    pub fn buffer(&mut self, name: &str, shape: &[usize], value: f64) -> Result<ParamId> {
        Ok(self.store.add_buffer(name, Tensor::full(shape, value))?)
    }
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub dilation: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        init: &mut Init,
        name: &str,
        cin: usize,
        cout: usize,
        kf: usize,
        kt: usize,
        bias: bool,
        dilation: usize,
    ) -> Result<Self> {
        let w = init.kaiming(&format!("{}.weight", name), &[cout, cin, kf, kt], cin * kf * kt)?;
        let b = if bias {
            Some(init.constant(&format!("{}.bias", name), &[cout], 0.0)?)
        } else {
            None
        };
        Ok(Self { w, b, dilation })
    }

    pub fn forward(&self, ctx: &mut ForwardCtx, x: Var) -> Result<Var> {
        let w = ctx.p(self.w);
        let b = self.b.map(|b| ctx.p(b));
        Ok(ctx.g.conv2d(x, w, b, self.dilation)?)
    }
}

/// Batch norm over axis 1 with running statistics kept as store buffers.
#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub eps: f64,
}

impl BatchNorm {
    pub fn new(init: &mut Init, name: &str, channels: usize, eps: f64) -> Result<Self> {
        Ok(Self {
            gamma: init.constant(&format!("{}.weight", name), &[channels], 1.0)?,
            beta: init.constant(&format!("{}.bias", name), &[channels], 0.0)?,
            running_mean: init.buffer(&format!("{}.running_mean", name), &[channels], 0.0)?,
            running_var: init.buffer(&format!("{}.running_var", name), &[channels], 1.0)?,
            eps,
        })
    }

    pub fn forward(&self, ctx: &mut ForwardCtx, x: Var) -> Result<Var> {
        let (gamma, beta) = (ctx.p(self.gamma), ctx.p(self.beta));
        let store = ctx.store;
        let mode = if ctx.train {
            BnMode::Train
        } else {
            BnMode::Eval {
                running_mean: store.tensor(self.running_mean).data(),
                running_var: store.tensor(self.running_var).data(),
            }
        };
        let (y, stats) = ctx.g.batch_norm(x, gamma, beta, mode, self.eps)?;
        if let Some(stats) = stats {
            ctx.bn_updates.push(BnUpdate {
                mean: self.running_mean,
                var: self.running_var,
                stats,
            });
        }
        Ok(y)
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(init: &mut Init, name: &str, din: usize, dout: usize) -> Result<Self> {
        Ok(Self {
            w: init.kaiming(&format!("{}.weight", name), &[dout, din], din)?,
            b: init.constant(&format!("{}.bias", name), &[dout], 0.0)?,
        })
    }

    pub fn forward(&self, ctx: &mut ForwardCtx, x: Var) -> Result<Var> {
        let (w, b) = (ctx.p(self.w), ctx.p(self.b));
        Ok(ctx.g.linear(x, w, Some(b))?)
    }
}

/// `x * sigmoid(conv1x1(x))`.
#[derive(Clone, Debug)]
pub struct ContextGating {
    pub gate: Conv2d,
}

impl ContextGating {
    pub fn new(init: &mut Init, name: &str, channels: usize) -> Result<Self> {
        Ok(Self {
            gate: Conv2d::new(init, &format!("{}.gate", name), channels, channels, 1, 1, true, 1)?,
        })
    }

    pub fn forward(&self, ctx: &mut ForwardCtx, x: Var) -> Result<Var> {
        let z = self.gate.forward(ctx, x)?;
        let s = ctx.g.sigmoid(z);
        Ok(ctx.g.mul(x, s)?)
    }
}

#[derive(Clone, Debug)]
pub enum ActivationBlock {
    Gating(ContextGating),
    Relu,
}

impl ActivationBlock {
    pub fn forward(&self, ctx: &mut ForwardCtx, x: Var) -> Result<Var> {
        match self {
            ActivationBlock::Gating(cg) => cg.forward(ctx, x),
            ActivationBlock::Relu => Ok(ctx.g.relu(x)),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GruDirection {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b_ih: ParamId,
    pub b_hh: ParamId,
}

impl GruDirection {
    fn new(init: &mut Init, name: &str, din: usize, hidden: usize) -> Result<Self> {
        let bound = 1.0 / (hidden as f64).sqrt();
        Ok(Self {
            w_ih: init.uniform(&format!("{}.weight_ih", name), &[3 * hidden, din], bound)?,
            w_hh: init.uniform(&format!("{}.weight_hh", name), &[3 * hidden, hidden], bound)?,
            b_ih: init.constant(&format!("{}.bias_ih", name), &[3 * hidden], 0.0)?,
            b_hh: init.constant(&format!("{}.bias_hh", name), &[3 * hidden], 0.0)?,
        })
    }

    fn weights(&self, ctx: &mut ForwardCtx) -> GruWeights {
        GruWeights {
            w_ih: ctx.p(self.w_ih),
            w_hh: ctx.p(self.w_hh),
            b_ih: ctx.p(self.b_ih),
            b_hh: ctx.p(self.b_hh),
        }
    }
}

/// Stacked bidirectional GRU, `[B, T, D] -> [B, T, 2H]`.
#[derive(Clone, Debug)]
pub struct BiGru {
    pub layers: Vec<(GruDirection, GruDirection)>,
}

impl BiGru {
    pub fn new(init: &mut Init, name: &str, din: usize, hidden: usize, layers: usize) -> Result<Self> {
        let layers = (0..layers)
            .map(|l| {
                let d = if l == 0 { din } else { 2 * hidden };
                Ok((
                    GruDirection::new(init, &format!("{}.l{}.fwd", name, l), d, hidden)?,
                    GruDirection::new(init, &format!("{}.l{}.bwd", name, l), d, hidden)?,
                ))
            })
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    pub fn forward(&self, ctx: &mut ForwardCtx, mut x: Var) -> Result<Var> {
        for (fwd, bwd) in &self.layers {
            let wf = fwd.weights(ctx);
            let wb = bwd.weights(ctx);
            let yf = ctx.g.gru(x, wf, false)?;
            let yb = ctx.g.gru(x, wb, true)?;
            x = ctx.g.concat(&[yf, yb], 2)?;
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn running_stats_follow_momentum() {
        let mut store = ParamStore::new();
        let mut init = Init::new(&mut store, 0);
        let bn = BatchNorm::new(&mut init, "bn", 2, 1e-5).unwrap();
        let x = Tensor::from_fn(&[2, 2, 1, 2], |i| (i[0] * 2 + i[3]) as f64 + 10.0 * i[1] as f64);
        let updates = {
            let mut g = Graph::new();
            let mut ctx = ForwardCtx::new(&mut g, &store, true);
            let xv = ctx.g.leaf(x);
            bn.forward(&mut ctx, xv).unwrap();
            ctx.bn_updates
        };
        apply_bn_updates(&mut store, &updates, 0.1);
        // Channel 0 holds {0, 1, 2, 3}: mean 1.5, unbiased variance 5/3.
        let m = store.tensor(bn.running_mean).data();
        let v = store.tensor(bn.running_var).data();
        assert!((m[0] - 0.15).abs() < 1e-12 && (m[1] - 1.15).abs() < 1e-12);
        assert!((v[0] - (0.9 + 0.1 * 5.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn buffers_are_not_trainable() {
        let mut store = ParamStore::new();
        let mut init = Init::new(&mut store, 0);
        BatchNorm::new(&mut init, "bn", 3, 1e-5).unwrap();
        assert_eq!(store.count_trainable(), 6);
        assert_eq!(store.len(), 4);
    }

    #[test]
    fn same_seed_same_init() {
        let build = || {
            let mut store = ParamStore::new();
            let mut init = Init::new(&mut store, 7);
            Conv2d::new(&mut init, "c", 2, 3, 3, 3, true, 1).unwrap();
            store.tensor(store.id("c.weight").unwrap()).clone()
        };
        assert_eq!(build(), build());
    }

    #[test]
    fn bigru_output_width() {
        let mut store = ParamStore::new();
        let mut init = Init::new(&mut store, 1);
        let gru = BiGru::new(&mut init, "rnn", 4, 3, 2).unwrap();
        let mut g = Graph::new();
        let mut ctx = ForwardCtx::new(&mut g, &store, false);
        let x = ctx.g.leaf(Tensor::full(&[2, 5, 4], 0.1));
        let y = gru.forward(&mut ctx, x).unwrap();
        assert_eq!(ctx.g.shape(y), &[2, 5, 6]);
    }
}
