//! Finite-difference suites for the layers and the composed network.
//!
//! Every trainable parameter of the module under test is bound to a graph
//! leaf, so the check covers parameter gradients as well as the input.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sed_tensor::gradsuite::{Build, Suite};
use sed_tensor::{Graph, ParamId, ParamStore, Tensor, Var};

use crate::config::{AttentionConfig, ContextPooling, LayerConfig, ModelConfig, TapConfig};
use crate::dynamic::{FreqDynamicLayer, KernelAttention};
use crate::error::SedError;
use crate::model::SedNet;
use crate::nn::{ForwardCtx, Init};
use crate::tap::TapPooling;

fn trainable(store: &ParamStore) -> (Vec<ParamId>, Vec<Tensor>) {
    store
        .iter()
        .filter(|(_, p)| p.trainable)
        .map(|(id, p)| (id, (*p.value).clone()))
        .unzip()
}

fn tensor_err(e: SedError) -> sed_tensor::TensorError {
    match e {
        SedError::Tensor(t) => t,
        other => sed_tensor::TensorError::Param(other.to_string()),
    }
}

/// Wraps a module forward into a check over `[input, params…]`.
fn bound_case(
    store: ParamStore,
    input: Tensor,
    forward: impl Fn(&mut ForwardCtx, Var) -> crate::Result<Var> + 'static,
) -> (Vec<Tensor>, Build) {
    let (ids, values) = trainable(&store);
    let mut inputs = vec![input];
    inputs.extend(values);
    let build: Build = Box::new(move |g: &mut Graph, v: &[Var]| {
        let mut ctx = ForwardCtx::new(g, &store, true).with_stream(7, 0, "gradcheck");
        for (id, &var) in ids.iter().zip(&v[1..]) {
            ctx.bind(*id, var);
        }
        forward(&mut ctx, v[0]).map_err(tensor_err)
    });
    (inputs, build)
}

fn dims(r: &mut ChaCha8Rng) -> (usize, usize, usize, usize) {
    (2, r.random_range(1..=3), r.random_range(2..=4), r.random_range(2..=4))
}

fn tap_cfg(r: &mut ChaCha8Rng) -> TapConfig {
    let mut t = TapConfig {
        min_hidden: 2,
        ..TapConfig::default()
    };
    if r.random_bool(0.5) {
        t.velocity_input = crate::config::VelocityInput::Raw;
    }
    t
}

fn tiny_model(r: &mut ChaCha8Rng) -> ModelConfig {
    let second = if r.random_bool(0.5) {
        LayerConfig {
            static_channels: 1,
            branch_channels: 2,
            branches: vec![vec![1, 2]],
            pooling: ContextPooling::Tap,
            pool: (1, 4),
        }
    } else {
        LayerConfig {
            static_channels: 1,
            branch_channels: 1,
            branches: vec![vec![1, 1], vec![1, 3]],
            pooling: ContextPooling::Average,
            pool: (1, 4),
        }
    };
    let mut cfg = ModelConfig::with_layers(vec![LayerConfig::static_layer(2, (2, 2)), second]);
    cfg.n_mels = 8;
    cfg.basis_kernels = 2;
    cfg.gru_hidden = 2;
    cfg.gru_layers = r.random_range(1..=2);
    cfg.classes = 2;
    cfg.attention.min_hidden = 2;
    cfg.tap.min_hidden = 2;
    cfg
}

/// Layer- and model-level suites, tolerance `1e-4`. Hidden ReLUs after batch
/// norm can land within a step of zero, so these suites redraw kinked cases.
pub fn model_suites() -> Vec<Suite> {
    vec![
        Suite::new("tap_pooling", 1e-4, |r| {
            let (b, c, f, t) = dims(r);
            let cfg = tap_cfg(r);
            let mut store = ParamStore::new();
            let tap = TapPooling::new(&mut Init::new(&mut store, r.random()), "tap", c, &cfg, 1e-5).expect("valid tap");
            let x = Tensor::randn(&[b, c, f, t], r);
            bound_case(store, x, move |ctx, x| Ok(tap.forward(ctx, x)?.pooled))
        })
        .with_kink_redraw(),
        Suite::new("kernel_attention", 1e-4, |r| {
            let (b, c, f, _) = dims(r);
            let k = r.random_range(2..=4);
            let cfg = AttentionConfig {
                min_hidden: 2,
                ..AttentionConfig::default()
            };
            let mut store = ParamStore::new();
            let att = KernelAttention::new(&mut Init::new(&mut store, r.random()), "att", c, k, &cfg, 1e-5).expect("valid attention");
            let x = Tensor::randn(&[b, c, f], r);
            bound_case(store, x, move |ctx, x| att.forward(ctx, x))
        })
        .with_kink_redraw(),
        Suite::new("dynamic_layer", 1e-4, |r| {
            let (b, c, f, t) = dims(r);
            let pooling = if r.random_bool(0.5) { ContextPooling::Tap } else { ContextPooling::Average };
            let dil: Vec<usize> = (0..2).map(|_| r.random_range(1..=2)).collect();
            let layer_cfg = LayerConfig {
                static_channels: r.random_range(0..=1),
                branch_channels: 2,
                branches: vec![dil],
                pooling,
                pool: (1, 1),
            };
            let att = AttentionConfig {
                min_hidden: 2,
                ..AttentionConfig::default()
            };
            let tap = tap_cfg(r);
            let mut store = ParamStore::new();
            let layer = FreqDynamicLayer::new(&mut Init::new(&mut store, r.random()), "l", c, &layer_cfg, 3, &att, &tap, 1e-5)
                .expect("valid layer");
            let x = Tensor::randn(&[b, c, f, t], r);
            bound_case(store, x, move |ctx, x| layer.forward(ctx, x))
        })
        .with_kink_redraw(),
        Suite::new("sednet_tiny", 1e-4, |r| {
            let cfg = tiny_model(r);
            let (net, store) = SedNet::build(&cfg, r.random()).expect("valid tiny model");
            let x = Tensor::randn(&[2, 1, 8, 8], r);
            bound_case(store, x, move |ctx, x| {
                let p = net.forward(ctx, x)?;
                let ns = ctx.g.value(p.strong).numel();
                let nw = ctx.g.value(p.weak).numel();
                let s = ctx.g.reshape(p.strong, &[ns])?;
                let w = ctx.g.reshape(p.weak, &[nw])?;
                Ok(ctx.g.concat(&[s, w], 0)?)
            })
        })
        .with_kink_redraw(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use sed_tensor::gradsuite::run;

    #[test]
    fn layer_suites_pass_on_a_few_seeds() {
        for s in model_suites() {
            let r = run(&s, 3).unwrap();
            assert!(r.passed(), "{} seed {}: {:e}", r.name, r.worst_seed, r.worst);
        }
    }
}

