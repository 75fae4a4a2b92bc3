//! Batched inference and scoring of a trained network.

use rayon::prelude::*;
use sed_tensor::{Graph, ParamStore, Tensor};

use crate::config::EvalConfig;
use crate::error::{invalid, Result};
use crate::eval::{classwise_f1, decode_clip, macro_f1, psds, ClassScore, DecodeParams, Event, PsdsResult};
use crate::model::SedNet;
use crate::nn::ForwardCtx;

/// Posteriors of one clip.
#[derive(Clone, Debug, PartialEq)]
pub struct Posteriors {
    /// `[classes, frames]`
    pub strong: Vec<f64>,
    /// `[classes]`
    pub weak: Vec<f64>,
}

/// Stacks `[n_mels, frames]` clips into a `[B, 1, n_mels, frames]` tensor.
pub fn stack(clips: &[&[f64]], n_mels: usize) -> Result<Tensor> {
    let len = clips.first().map_or(0, |c| c.len());
    if clips.iter().any(|c| c.len() != len) || len % n_mels.max(1) != 0 {
        return Err(invalid("clips differ in length or do not match the mel count"));
    }
    let mut data = Vec::with_capacity(clips.len() * len);
    clips.iter().for_each(|c| data.extend_from_slice(c));
    Ok(Tensor::new(vec![clips.len(), 1, n_mels, len / n_mels], data)?)
}

/// Eval-mode forward passes in batches of `batch` clips; batches run in
/// parallel on independent graphs.
pub fn predict(net: &SedNet, store: &ParamStore, features: &[Vec<f64>], batch: usize) -> Result<Vec<Posteriors>> {
    let n_mels = net.config.n_mels;
    let chunks: Vec<Vec<Posteriors>> = features
        .par_chunks(batch.max(1))
        .map(|chunk| {
            let refs: Vec<&[f64]> = chunk.iter().map(Vec::as_slice).collect();
            let x = stack(&refs, n_mels)?;
            let mut g = Graph::no_grad();
            let xv = g.constant(x);
            let mut ctx = ForwardCtx::new(&mut g, store, false);
            let p = net.forward(&mut ctx, xv)?;
            let (s, w) = (g.value(p.strong), g.value(p.weak));
            let (cs, cw) = (s.numel() / chunk.len(), w.numel() / chunk.len());
            Ok((0..chunk.len())
                .map(|i| Posteriors {
                    strong: s.data()[i * cs..(i + 1) * cs].to_vec(),
                    weak: w.data()[i * cw..(i + 1) * cw].to_vec(),
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Events of every clip at one threshold.
pub fn detections(files: &[String], posts: &[Posteriors], threshold: f64, p: &DecodeParams) -> Result<Vec<Event>> {
    let mut out = Vec::new();
    for (f, post) in files.iter().zip(posts) {
        out.extend(decode_clip(f, &post.strong, &post.weak, threshold, p)?);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct EvalReport {
    pub psds: PsdsResult,
    pub classwise: Vec<Option<ClassScore>>,
    pub macro_f1: f64,
}

/// PSDS over the configured threshold sweep and class-wise F1 at the
/// single operating threshold.
pub fn evaluate(
    files: &[String],
    posts: &[Posteriors],
    truth: &[Event],
    hours: f64,
    classes: usize,
    cfg: &EvalConfig,
    p: &DecodeParams,
) -> Result<EvalReport> {
    if files.len() != posts.len() {
        return Err(invalid("one posterior set per file is required"));
    }
    let sweep: Vec<Vec<Event>> = cfg
        .psds
        .thresholds()
        .par_iter()
        .map(|&t| detections(files, posts, t, p))
        .collect::<Result<_>>()?;
    let psds = psds(&sweep, truth, classes, hours, &cfg.psds);
    let at = detections(files, posts, cfg.f1_threshold, p)?;
    let classwise = classwise_f1(&at, truth, classes, cfg.psds.dtc, cfg.psds.gtc);
    Ok(EvalReport {
        macro_f1: macro_f1(&classwise),
        psds,
        classwise,
    })
}
