//! Frequency-dynamic convolution layers.
//!
//! A layer is a static convolution plus zero or more dynamic branches whose
//! outputs are concatenated along channels. Each dynamic branch convolves
//! with K basis kernels and blends their outputs per frequency bin using a
//! kernel-attention map computed from a time-pooled context.

use sed_tensor::Var;

use crate::config::{AttentionConfig, ContextPooling, LayerConfig, LayerVariant, TapConfig};
use crate::error::{config_err, Result};
use crate::nn::{BatchNorm, Conv2d, ForwardCtx, Init};
use crate::tap::{avg_pool_time, TapPooling};

/// `[B, C, F]` context to `[B, K, F]` attention over basis kernels.
#[derive(Clone, Debug)]
pub struct KernelAttention {
    pub conv1: Conv2d,
    pub bn: BatchNorm,
    pub conv2: Conv2d,
    pub temperature: f64,
}

impl KernelAttention {
    pub fn new(init: &mut Init, name: &str, channels: usize, k: usize, cfg: &AttentionConfig, bn_eps: f64) -> Result<Self> {
        let h = cfg.hidden(channels);
        Ok(Self {
            conv1: Conv2d::new(init, &format!("{}.conv1", name), channels, h, cfg.kernel, 1, false, 1)?,
            bn: BatchNorm::new(init, &format!("{}.bn", name), h, bn_eps)?,
            conv2: Conv2d::new(init, &format!("{}.conv2", name), h, k, 1, 1, true, 1)?,
            temperature: cfg.temperature,
        })
    }

    pub fn forward(&self, ctx: &mut ForwardCtx, context: Var) -> Result<Var> {
        let s = ctx.g.shape(context).to_vec();
        let (b, c, f) = (s[0], s[1], s[2]);
        let x = ctx.g.reshape(context, &[b, c, f, 1])?;
        let h = self.conv1.forward(ctx, x)?;
        let h = self.bn.forward(ctx, h)?;
        let h = ctx.g.relu(h);
        let z = self.conv2.forward(ctx, h)?;
        let k = ctx.g.shape(z)[1];
        let z = ctx.g.reshape(z, &[b, k, f])?;
        let z = ctx.g.scale(z, 1.0 / self.temperature);
        Ok(ctx.g.softmax(z, 1)?)
    }
}

/// Blends basis-kernel outputs per frequency with `attention: [B, K, F]`.
pub fn fdy_forward(ctx: &mut ForwardCtx, x: Var, basis: &[Conv2d], attention: Var) -> Result<Var> {
    let outs = basis
        .iter()
        .map(|conv| conv.forward(ctx, x))
        .collect::<Result<Vec<_>>>()?;
    Ok(ctx.g.freq_blend(&outs, attention)?)
}

#[derive(Clone, Debug)]
pub enum ContextPool {
    Average,
    Tap(Box<TapPooling>),
}

/// One dynamic branch with its own context pooling and attention head.
#[derive(Clone, Debug)]
pub struct DynamicBranch {
    pub basis: Vec<Conv2d>,
    pub attention: KernelAttention,
    pub context: ContextPool,
}

/// Intermediate values of a dynamic branch, for inspection in tests.
#[derive(Clone, Copy, Debug)]
pub struct BranchTrace {
    pub context: Var,
    pub attention: Var,
    pub output: Var,
}

impl DynamicBranch {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        init: &mut Init,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        dilations: &[usize],
        pooling: ContextPooling,
        att: &AttentionConfig,
        tap: &TapConfig,
        bn_eps: f64,
    ) -> Result<Self> {
        let basis = dilations
            .iter()
            .enumerate()
            .map(|(k, &d)| Conv2d::new(init, &format!("{}.basis{}", name, k), cin, cout, kernel, kernel, true, d))
            .collect::<Result<Vec<_>>>()?;
        let context = match pooling {
            ContextPooling::Average => ContextPool::Average,
            ContextPooling::Tap => ContextPool::Tap(Box::new(TapPooling::new(
                init,
                &format!("{}.tap", name),
                cin,
                tap,
                bn_eps,
            )?)),
        };
        let attention = KernelAttention::new(init, &format!("{}.att", name), cin, dilations.len(), att, bn_eps)?;
        Ok(Self {
            basis,
            attention,
            context,
        })
    }

    pub fn context(&self, ctx: &mut ForwardCtx, x: Var) -> Result<Var> {
        match &self.context {
            ContextPool::Average => avg_pool_time(ctx, x),
            ContextPool::Tap(tap) => Ok(tap.forward(ctx, x)?.pooled),
        }
    }

    pub fn trace(&self, ctx: &mut ForwardCtx, x: Var) -> Result<BranchTrace> {
        let context = self.context(ctx, x)?;
        let attention = self.attention.forward(ctx, context)?;
        let output = fdy_forward(ctx, x, &self.basis, attention)?;
        Ok(BranchTrace {
            context,
            attention,
            output,
        })
    }

    pub fn forward(&self, ctx: &mut ForwardCtx, x: Var) -> Result<Var> {
        Ok(self.trace(ctx, x)?.output)
    }

    pub fn tap_mut(&mut self) -> Option<&mut TapPooling> {
        match &mut self.context {
            ContextPool::Tap(t) => Some(t),
            ContextPool::Average => None,
        }
    }
}

/// Static branch and dynamic branches, concatenated along channels.
#[derive(Clone, Debug)]
pub struct FreqDynamicLayer {
    pub variant: LayerVariant,
    pub static_conv: Option<Conv2d>,
    pub branches: Vec<DynamicBranch>,
}

impl FreqDynamicLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        init: &mut Init,
        name: &str,
        cin: usize,
        layer: &LayerConfig,
        kernel: usize,
        att: &AttentionConfig,
        tap: &TapConfig,
        bn_eps: f64,
    ) -> Result<Self> {
        if layer.out_channels() == 0 {
            return Err(config_err(format!("{}: no output channels", name)));
        }
        let static_conv = if layer.static_channels > 0 {
            Some(Conv2d::new(init, &format!("{}.static", name), cin, layer.static_channels, kernel, kernel, true, 1)?)
        } else {
            None
        };
        let branches = layer
            .branches
            .iter()
            .enumerate()
            .map(|(j, dil)| {
                DynamicBranch::new(
                    init,
                    &format!("{}.branch{}", name, j),
                    cin,
                    layer.branch_channels,
                    kernel,
                    dil,
                    layer.pooling,
                    att,
                    tap,
                    bn_eps,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            variant: layer.variant(),
            static_conv,
            branches,
        })
    }

    pub fn forward(&self, ctx: &mut ForwardCtx, x: Var) -> Result<Var> {
        let mut parts = Vec::with_capacity(1 + self.branches.len());
        if let Some(conv) = &self.static_conv {
            parts.push(conv.forward(ctx, x)?);
        }
        for b in &self.branches {
            parts.push(b.forward(ctx, x)?);
        }
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        Ok(ctx.g.concat(&parts, 1)?)
    }

    /// Enables or disables the attention terms of every TAP context.
    pub fn set_tap_terms(&mut self, ta: bool, va: bool) {
        for b in &mut self.branches {
            if let Some(t) = b.tap_mut() {
                t.ta_active = ta;
                t.va_active = va;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sed_tensor::{Graph, ParamStore, Tensor};

    #[test]
    fn zero_attention_weights_are_uniform() {
        let mut store = ParamStore::new();
        let att = KernelAttention::new(&mut Init::new(&mut store, 0), "att", 3, 4, &AttentionConfig::default(), 1e-5)
            .unwrap();
        for id in [att.conv1.w, att.conv2.w] {
            store.tensor_mut(id).data_mut().fill(0.0);
        }
        let mut g = Graph::new();
        let mut ctx = ForwardCtx::new(&mut g, &store, false);
        let c = ctx.g.leaf(Tensor::from_fn(&[2, 3, 5], |i| i.iter().sum::<usize>() as f64));
        let a = att.forward(&mut ctx, c).unwrap();
        assert_eq!(ctx.g.shape(a), &[2, 4, 5]);
        assert!(ctx.g.value(a).data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn static_only_layer_is_plain_conv() {
        let mut store = ParamStore::new();
        let cfg = LayerConfig::static_layer(3, (1, 1));
        let layer = FreqDynamicLayer::new(
            &mut Init::new(&mut store, 1),
            "conv",
            2,
            &cfg,
            3,
            &AttentionConfig::default(),
            &TapConfig::default(),
            1e-5,
        )
        .unwrap();
        let conv = layer.static_conv.clone().unwrap();
        let mut g = Graph::new();
        let mut ctx = ForwardCtx::new(&mut g, &store, false);
        let x = ctx.g.leaf(Tensor::from_fn(&[1, 2, 4, 3], |i| (i[2] * 3 + i[3]) as f64));
        let y = layer.forward(&mut ctx, x).unwrap();
        let z = conv.forward(&mut ctx, x).unwrap();
        assert_eq!(ctx.g.value(y), ctx.g.value(z));
    }
}
