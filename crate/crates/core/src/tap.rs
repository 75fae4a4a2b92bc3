//! Temporal attention pooling and plain temporal averaging of `[B, C, F, T]`
//! feature maps into `[B, C, F]` contexts.

use sed_tensor::Var;

use crate::config::{TapConfig, VelocityInput};
use crate::error::Result;
use crate::nn::{BatchNorm, Conv2d, ForwardCtx, Init};

const TIME: usize = 3;

/// `conv -> BN -> ReLU -> conv`, mapping C channels back to C.
#[derive(Clone, Debug)]
pub struct TapBranch {
    pub conv1: Conv2d,
    pub bn: BatchNorm,
    pub conv2: Conv2d,
}

impl TapBranch {
    pub fn new(init: &mut Init, name: &str, channels: usize, cfg: &TapConfig, bn_eps: f64) -> Result<Self> {
        let h = cfg.hidden(channels);
        let (k1, k2) = (cfg.kernel, cfg.head_kernel);
        Ok(Self {
            conv1: Conv2d::new(init, &format!("{}.conv1", name), channels, h, k1, k1, true, 1)?,
            bn: BatchNorm::new(init, &format!("{}.bn", name), h, bn_eps)?,
            conv2: Conv2d::new(init, &format!("{}.conv2", name), h, channels, k2, k2, true, 1)?,
        })
    }

    pub fn forward(&self, ctx: &mut ForwardCtx, x: Var) -> Result<Var> {
        let h = self.conv1.forward(ctx, x)?;
        let h = self.bn.forward(ctx, h)?;
        let h = ctx.g.relu(h);
        self.conv2.forward(ctx, h)
    }
}

/// `x_s = sigmoid(block(x))`.
pub fn salient_representation(ctx: &mut ForwardCtx, block: &TapBranch, x: Var) -> Result<Var> {
    let z = block.forward(ctx, x)?;
    Ok(ctx.g.sigmoid(z))
}

/// Attention weights over time computed from `x`.
pub fn time_attention(ctx: &mut ForwardCtx, block: &TapBranch, x: Var) -> Result<Var> {
    let z = block.forward(ctx, x)?;
    Ok(ctx.g.softmax(z, TIME)?)
}

/// Attention weights over time computed from frame differences of `x`
/// (or from `x` itself with [`VelocityInput::Raw`]).
pub fn velocity_attention(ctx: &mut ForwardCtx, block: &TapBranch, x: Var, input: VelocityInput) -> Result<Var> {
    let src = match input {
        VelocityInput::Delta => ctx.g.time_diff(x)?,
        VelocityInput::Raw => x,
    };
    let z = block.forward(ctx, src)?;
    Ok(ctx.g.softmax(z, TIME)?)
}

pub fn avg_pool_time(ctx: &mut ForwardCtx, x: Var) -> Result<Var> {
    Ok(ctx.g.mean_axis(x, TIME)?)
}

#[derive(Clone, Copy, Debug)]
pub struct TapOutput {
    /// `[B, C, F]`
    pub pooled: Var,
    pub alpha: Option<Var>,
    pub beta: Option<Var>,
    pub x_salient: Option<Var>,
}

#[derive(Clone, Debug)]
pub struct TapPooling {
    pub saliency: TapBranch,
    pub time_att: Option<TapBranch>,
    pub vel_att: Option<TapBranch>,
    pub velocity_input: VelocityInput,
    pub use_avg: bool,
    /// Runtime switches; a disabled term contributes zero.
    pub ta_active: bool,
    pub va_active: bool,
}

impl TapPooling {
    pub fn new(init: &mut Init, name: &str, channels: usize, cfg: &TapConfig, bn_eps: f64) -> Result<Self> {
        let branch = |init: &mut Init, n: &str| TapBranch::new(init, &format!("{}.{}", name, n), channels, cfg, bn_eps);
        Ok(Self {
            saliency: branch(init, "sal")?,
            time_att: if cfg.use_ta { Some(branch(init, "ta")?) } else { None },
            vel_att: if cfg.use_va { Some(branch(init, "va")?) } else { None },
            velocity_input: cfg.velocity_input,
            use_avg: cfg.use_avg,
            ta_active: true,
            va_active: true,
        })
    }

    /// `x_TAP = Σ_t α ⊙ x_s + Σ_t β ⊙ x_s + mean_t x`.
    pub fn forward(&self, ctx: &mut ForwardCtx, x: Var) -> Result<TapOutput> {
        let ta = self.time_att.as_ref().filter(|_| self.ta_active);
        let va = self.vel_att.as_ref().filter(|_| self.va_active);
        let x_salient = if ta.is_some() || va.is_some() {
            Some(salient_representation(ctx, &self.saliency, x)?)
        } else {
            None
        };
        let mut terms = Vec::new();
        let weighted = |ctx: &mut ForwardCtx, w: Var| -> Result<Var> {
            let xs = x_salient.expect("saliency computed when a term is active");
            let m = ctx.g.mul(w, xs)?;
            Ok(ctx.g.sum_axis(m, TIME)?)
        };
        let alpha = match ta {
            Some(b) => {
                let a = time_attention(ctx, b, x)?;
                terms.push(weighted(ctx, a)?);
                Some(a)
            }
            None => None,
        };
        let beta = match va {
            Some(b) => {
                let be = velocity_attention(ctx, b, x, self.velocity_input)?;
                terms.push(weighted(ctx, be)?);
                Some(be)
            }
            None => None,
        };
        if self.use_avg || terms.is_empty() {
            terms.push(avg_pool_time(ctx, x)?);
        }
        let mut pooled = terms[0];
        for &t in &terms[1..] {
            pooled = ctx.g.add(pooled, t)?;
        }
        Ok(TapOutput {
            pooled,
            alpha,
            beta,
            x_salient,
        })
    }
}
