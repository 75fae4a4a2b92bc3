//! CRNN: conv stack, bidirectional GRU, strong and attention-pooled weak heads.

use std::collections::BTreeMap;

use sed_tensor::{ParamStore, Var};

use crate::config::{Activation, ModelConfig, WeakPooling};
use crate::dynamic::FreqDynamicLayer;
use crate::error::Result;
use crate::nn::{ActivationBlock, BatchNorm, BiGru, ContextGating, ForwardCtx, Init, Linear};

/// Frame-wise and clip-level posteriors.
#[derive(Clone, Copy, Debug)]
pub struct Predictions {
    /// `[B, classes, T_out]`
    pub strong: Var,
    /// `[B, classes]`
    pub weak: Var,
}

#[derive(Clone, Debug)]
pub struct ConvBlock {
    pub layer: FreqDynamicLayer,
    pub bn: BatchNorm,
    pub act: ActivationBlock,
    /// `(time, freq)`
    pub pool: (usize, usize),
}

/// Parameter handles of a built network. Values live in a [`ParamStore`], so
/// a student and its teacher share one `SedNet` with different stores.
#[derive(Clone, Debug)]
pub struct SedNet {
    pub config: ModelConfig,
    pub blocks: Vec<ConvBlock>,
    pub rnn: BiGru,
    pub strong_head: Linear,
    pub weak_head: Linear,
}

impl SedNet {
    pub fn build(cfg: &ModelConfig, seed: u64) -> Result<(Self, ParamStore)> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let mut init = Init::new(&mut store, seed);
        let mut cin = cfg.in_channels;
        let mut blocks = Vec::with_capacity(cfg.layers.len());
        for (i, l) in cfg.layers.iter().enumerate() {
            let name = format!("conv{}", i + 1);
            let cout = l.out_channels();
            let layer = FreqDynamicLayer::new(
                &mut init,
                &name,
                cin,
                l,
                cfg.kernel_size,
                &cfg.attention,
                &cfg.tap,
                cfg.bn_eps,
            )?;
            let bn = BatchNorm::new(&mut init, &format!("{}.bn", name), cout, cfg.bn_eps)?;
            let act = match cfg.activation {
                Activation::ContextGating => {
                    ActivationBlock::Gating(ContextGating::new(&mut init, &format!("{}.cg", name), cout)?)
                }
                Activation::Relu => ActivationBlock::Relu,
            };
            blocks.push(ConvBlock {
                layer,
                bn,
                act,
                pool: l.pool,
            });
            cin = cout;
        }
        let rnn = BiGru::new(&mut init, "rnn", cin, cfg.gru_hidden, cfg.gru_layers)?;
        let strong_head = Linear::new(&mut init, "strong", 2 * cfg.gru_hidden, cfg.classes)?;
        let weak_head = Linear::new(&mut init, "weak", 2 * cfg.gru_hidden, cfg.classes)?;
        let net = Self {
            config: cfg.clone(),
            blocks,
            rnn,
            strong_head,
            weak_head,
        };
        Ok((net, store))
    }

    /// CNN output `[B, C, 1, T_out]` for features `[B, 1, F, T]`.
    pub fn cnn_forward(&self, ctx: &mut ForwardCtx, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, b) in self.blocks.iter().enumerate() {
            h = b.layer.forward(ctx, h)?;
            h = b.bn.forward(ctx, h)?;
            h = b.act.forward(ctx, h)?;
            h = ctx.dropout(h, self.config.cnn_dropout, &format!("conv{}.drop", i + 1))?;
            h = ctx.g.avg_pool2d(h, b.pool.1, b.pool.0)?;
        }
        Ok(h)
    }

    pub fn forward(&self, ctx: &mut ForwardCtx, features: Var) -> Result<Predictions> {
        let h = self.cnn_forward(ctx, features)?;
        let s = ctx.g.shape(h).to_vec();
        let (b, c, f, t) = (s[0], s[1], s[2], s[3]);
        let h = ctx.g.reshape(h, &[b, c * f, t])?;
        let h = ctx.g.permute(h, &[0, 2, 1])?;
        let h = self.rnn.forward(ctx, h)?;
        let h = ctx.dropout(h, self.config.rnn_dropout, "rnn.drop")?;

        let z = self.strong_head.forward(ctx, h)?;
        let strong = ctx.g.sigmoid(z);
        let a = self.weak_head.forward(ctx, h)?;
        let weak = match self.config.weak_pooling {
            WeakPooling::Time => {
                let att = ctx.g.softmax(a, 1)?;
                let m = ctx.g.mul(att, strong)?;
                ctx.g.sum_axis(m, 1)?
            }
            WeakPooling::Class => {
                let att = ctx.g.softmax(a, 2)?;
                let m = ctx.g.mul(att, strong)?;
                let num = ctx.g.sum_axis(m, 1)?;
                let den = ctx.g.sum_axis(att, 1)?;
                ctx.g.div(num, den)?
            }
        };
        let strong = ctx.g.permute(strong, &[0, 2, 1])?;
        Ok(Predictions { strong, weak })
    }

    /// Enables or disables the TAP attention terms in every layer.
    pub fn set_tap_terms(&mut self, ta: bool, va: bool) {
        for b in &mut self.blocks {
            b.layer.set_tap_terms(ta, va);
        }
    }
}

/// Trainable scalar count.
pub fn count_params(store: &ParamStore) -> usize {
    store.count_trainable()
}

/// Trainable scalars grouped by the first `depth` dot-separated name segments.
pub fn param_breakdown(store: &ParamStore, depth: usize) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for (_, p) in store.iter().filter(|(_, p)| p.trainable) {
        let key = p.name.split('.').take(depth).collect::<Vec<_>>().join(".");
        *out.entry(key).or_insert(0) += p.value.numel();
    }
    out
}

/// Trainable scalars per component kind across the whole network.
pub fn param_kinds(store: &ParamStore) -> BTreeMap<&'static str, usize> {
    let mut out = BTreeMap::new();
    for (_, p) in store.iter().filter(|(_, p)| p.trainable) {
        let n = &p.name;
        let kind = if n.contains(".tap.") {
            "tap"
        } else if n.contains(".att.") {
            "kernel_attention"
        } else if n.contains(".basis") {
            "basis_kernels"
        } else if n.contains(".static.") {
            "static_conv"
        } else if n.contains(".cg.") {
            "context_gating"
        } else if n.contains(".bn.") {
            "batch_norm"
        } else if n.starts_with("rnn.") {
            "rnn"
        } else {
            "heads"
        };
        *out.entry(kind).or_insert(0) += p.value.numel();
    }
    out
}
