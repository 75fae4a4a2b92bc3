//! Mean-teacher training loop.

use rand::seq::SliceRandom;
use rand::Rng;
use sed_tensor::rng::{stream_key, stream_rng};
use sed_tensor::{Graph, ParamStore, Tensor};

use crate::config::RunConfig;
use crate::data::{Clip, EvalSet};
use crate::error::{invalid, Result};
use crate::eval::DecodeParams;
use crate::infer::{evaluate, predict, stack};
use crate::model::SedNet;
use crate::nn::{apply_bn_updates, ForwardCtx};
use crate::train::adam::Adam;
use crate::train::augment::{filter_augment, frameshift, mixup, mixup_lambda, time_mask, FilterDraw};
use crate::train::ema::ema_update;
use crate::train::loss::{consistency_ramp, total_loss, BatchTargets};

/// Training inputs; clips carry features and the targets of their subset.
#[derive(Clone, Debug, Default)]
pub struct TrainData {
    pub strong: Vec<Clip>,
    pub weak: Vec<Clip>,
    pub unlabeled: Vec<Clip>,
    pub validation: Option<EvalSet>,
}

/// Per-epoch means over steps.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub loss: f64,
    pub strong: f64,
    pub weak: f64,
    pub consistency: f64,
    pub val_psds1: Option<f64>,
}

impl EpochLog {
    pub const HEADER: &'static str = "epoch\tloss\tstrong_loss\tweak_loss\tcons_loss\tval_psds1";

    pub fn line(&self) -> String {
        let val = self.val_psds1.map_or("nan".to_string(), |v| format!("{:.6}", v));
        format!(
            "{}\t{:.9}\t{:.9}\t{:.9}\t{:.9}\t{}",
            self.epoch, self.loss, self.strong, self.weak, self.consistency, val
        )
    }
}

pub struct TrainOutcome {
    pub net: SedNet,
    pub student: ParamStore,
    pub teacher: ParamStore,
    pub log: Vec<EpochLog>,
}

/// Endless per-epoch sample order over one subset: successive shuffled
/// passes, each seeded by `(seed, subset, epoch, pass)`.
struct Order {
    len: usize,
    seed: u64,
    site: String,
    pass: u64,
    queue: Vec<usize>,
}

impl Order {
    fn new(len: usize, seed: u64, subset: &str, epoch: usize) -> Self {
        Self {
            len,
            seed,
            site: format!("order.{}.{}", subset, epoch),
            pass: 0,
            queue: Vec::new(),
        }
    }

    fn take(&mut self, n: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n && self.len > 0 {
            if self.queue.is_empty() {
                let mut rng = stream_rng(stream_key(self.seed, &self.site, self.pass));
                self.queue = (0..self.len).collect();
                self.queue.shuffle(&mut rng);
                self.queue.reverse();
                self.pass += 1;
            }
            out.push(self.queue.pop().expect("refilled queue"));
        }
        out
    }
}

/// Steps per epoch: enough to visit every clip of the largest subset once.
pub fn steps_per_epoch(cfg: &RunConfig, data: &TrainData) -> usize {
    let t = &cfg.train;
    [
        (data.strong.len(), t.batch_strong),
        (data.weak.len(), t.batch_weak),
        (data.unlabeled.len(), t.batch_unlabeled),
    ]
    .iter()
    .filter(|(n, b)| *n > 0 && *b > 0)
    .map(|(n, b)| n.div_ceil(*b))
    .max()
    .unwrap_or(0)
}

/// Augmented inputs and targets of one step.
struct Batch {
    student: Tensor,
    teacher: Tensor,
    targets: BatchTargets,
}

fn assemble(cfg: &RunConfig, data: &TrainData, idx: [&[usize]; 3], step: u64) -> Result<Batch> {
    let t = &cfg.train;
    let m = &cfg.model;
    let n_mels = m.n_mels;
    let classes = m.classes;
    let pool = m.time_pool();
    let seed = cfg.seed;
    let subsets = [&data.strong, &data.weak, &data.unlabeled];

    let mut feats: [Vec<Vec<f64>>; 3] = Default::default();
    let mut strong_y: Vec<Vec<f64>> = Vec::new();
    let mut weak_y: Vec<Vec<f64>> = Vec::new();
    for (s, (clips, ids)) in subsets.iter().zip(idx).enumerate() {
        for &i in ids {
            let c = &clips[i];
            feats[s].push(c.features.clone());
            match s {
                0 => strong_y.push(c.strong.clone().ok_or_else(|| invalid(format!("`{}` lacks strong labels", c.file)))?),
                1 => weak_y.push(c.weak.clone().ok_or_else(|| invalid(format!("`{}` lacks weak labels", c.file)))?),
                _ => {}
            }
        }
    }

    // Circular frame shift of every clip.
    for (s, rows) in feats.iter_mut().enumerate() {
        for (j, x) in rows.iter_mut().enumerate() {
            let mut rng = stream_rng(stream_key(seed, &format!("aug.shift.{}.{}", s, j), step));
            let k = t.max_shift as i64;
            let shift = rng.random_range(-k..=k) as isize;
            let y = if s == 0 { Some(strong_y[j].as_mut_slice()) } else { None };
            frameshift(x, n_mels, y, classes, shift, pool);
        }
    }

    // Mixup within the strong and within the weak subset.
    for s in 0..2 {
        let n = feats[s].len();
        if n < 2 || t.mixup_prob <= 0.0 {
            continue;
        }
        let mut rng = stream_rng(stream_key(seed, &format!("aug.mixup.{}", s), step));
        if rng.random::<f64>() >= t.mixup_prob {
            continue;
        }
        let lam = mixup_lambda(t.mixup_alpha, &mut rng);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        feats[s] = mixup(&feats[s], &perm, lam);
        let y = if s == 0 { &mut strong_y } else { &mut weak_y };
        *y = mixup(y, &perm, lam);
    }

    // One time mask per clip; strong targets masked alongside.
    let tp = cfg.frontend.n_frames(cfg.frontend.clip_samples()) / pool.max(1);
    let max_len = t.mask_max_frames / pool.max(1);
    for (s, rows) in feats.iter_mut().enumerate() {
        for (j, x) in rows.iter_mut().enumerate() {
            let mut rng = stream_rng(stream_key(seed, &format!("aug.mask.{}.{}", s, j), step));
            let len = rng.random_range(0..=max_len.min(tp));
            let start = rng.random_range(0..=tp - len);
            let y = if s == 0 { Some(strong_y[j].as_mut_slice()) } else { None };
            time_mask(x, n_mels, y, classes, start, len, pool);
        }
    }

    // Independent filter draws for the two models.
    let all: Vec<&Vec<f64>> = feats.iter().flatten().collect();
    let mut views = [Vec::new(), Vec::new()];
    for (v, who) in views.iter_mut().zip(["student", "teacher"]) {
        for (j, x) in all.iter().enumerate() {
            let mut rng = stream_rng(stream_key(seed, &format!("aug.filter.{}.{}", who, j), step));
            let d = FilterDraw::draw(n_mels, t.filter_bands, t.filter_gain_db, &mut rng);
            v.push(filter_augment(x, n_mels, &d));
        }
    }
    let to_tensor = |rows: &[Vec<f64>]| -> Result<Tensor> {
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        stack(&refs, n_mels)
    };
    let targets = BatchTargets {
        strong: if strong_y.is_empty() {
            None
        } else {
            Some(Tensor::new(vec![strong_y.len(), classes, tp], strong_y.concat())?)
        },
        weak: if weak_y.is_empty() {
            None
        } else {
            Some(Tensor::new(vec![weak_y.len(), classes], weak_y.concat())?)
        },
    };
    Ok(Batch {
        student: to_tensor(&views[0])?,
        teacher: to_tensor(&views[1])?,
        targets,
    })
}

/// Loss values of one step.
#[derive(Clone, Copy, Debug, Default)]
struct StepLoss {
    total: f64,
    strong: f64,
    weak: f64,
    cons: f64,
}

/// Student and teacher state plus the optimizer.
pub struct Trainer {
    pub cfg: RunConfig,
    pub net: SedNet,
    pub student: ParamStore,
    pub teacher: ParamStore,
    pub opt: Adam,
    pub step: u64,
}

impl Trainer {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let (net, student) = SedNet::build(&cfg.model, cfg.seed)?;
        let t = &cfg.train;
        Ok(Self {
            cfg: cfg.clone(),
            net,
            teacher: student.clone(),
            student,
            opt: Adam::new(t.lr, t.beta1, t.beta2, t.adam_eps),
            step: 0,
        })
    }

    fn train_step(&mut self, batch: &Batch, w_cons: f64) -> Result<StepLoss> {
        let t = &self.cfg.train;
        let precision = t.precision.0;
        let momentum = self.cfg.model.bn_momentum;

        let mut tg = Graph::no_grad().with_precision(precision);
        let tx = tg.constant(batch.teacher.clone());
        let mut tctx = ForwardCtx::new(&mut tg, &self.teacher, true).with_stream(self.cfg.seed, self.step, "teacher");
        let tp = self.net.forward(&mut tctx, tx)?;
        let t_updates = std::mem::take(&mut tctx.bn_updates);
        let (t_strong, t_weak) = (tg.value(tp.strong).clone(), tg.value(tp.weak).clone());
        drop(tg);

        let mut g = Graph::new().with_precision(precision);
        let x = g.constant(batch.student.clone());
        let mut ctx = ForwardCtx::new(&mut g, &self.student, true).with_stream(self.cfg.seed, self.step, "student");
        let sp = self.net.forward(&mut ctx, x)?;
        let s_updates = std::mem::take(&mut ctx.bn_updates);
        let lv = total_loss(&mut g, &sp, &t_strong, &t_weak, &batch.targets, t.w_weak, w_cons, t.stop_grad)?;
        let val = |v: Option<sed_tensor::Var>| v.map_or(0.0, |v| g.value(v).item());
        let out = StepLoss {
            total: g.value(lv.total).item(),
            strong: val(lv.strong),
            weak: val(lv.weak),
            cons: g.value(lv.consistency).item(),
        };
        if !out.total.is_finite() {
            return Err(invalid(format!("non-finite loss at step {}", self.step)));
        }
        let grads = if g.requires_grad(lv.total) {
            let gr = g.backward(lv.total)?;
            g.param_grads(&gr)
        } else {
            Vec::new()
        };
        drop(g);

        self.opt.step(&mut self.student, &grads);
        apply_bn_updates(&mut self.student, &s_updates, momentum);
        apply_bn_updates(&mut self.teacher, &t_updates, momentum);
        ema_update(&mut self.teacher, &self.student, t.ema_decay)?;
        self.step += 1;
        Ok(out)
    }

    /// Runs one epoch (0-based index) and returns its log row.
    pub fn epoch(&mut self, epoch: usize, data: &TrainData) -> Result<EpochLog> {
        let t = self.cfg.train.clone();
        let steps = steps_per_epoch(&self.cfg, data);
        if steps == 0 {
            return Err(invalid("no training clips"));
        }
        let w_cons = consistency_ramp(epoch as f64, t.w_cons_max, t.ramp_epochs);
        let seed = self.cfg.seed;
        let mut orders = [
            Order::new(data.strong.len(), seed, "strong", epoch),
            Order::new(data.weak.len(), seed, "weak", epoch),
            Order::new(data.unlabeled.len(), seed, "unlabeled", epoch),
        ];
        let sizes = [t.batch_strong, t.batch_weak, t.batch_unlabeled];
        let mut sum = StepLoss::default();
        for _ in 0..steps {
            let idx: Vec<Vec<usize>> = orders.iter_mut().zip(sizes).map(|(o, b)| o.take(b)).collect();
            let batch = assemble(&self.cfg, data, [&idx[0], &idx[1], &idx[2]], self.step)?;
            let l = self.train_step(&batch, w_cons)?;
            sum.total += l.total;
            sum.strong += l.strong;
            sum.weak += l.weak;
            sum.cons += l.cons;
        }
        let n = steps as f64;
        let val_psds1 = match &data.validation {
            Some(v) => Some(self.validate(v)?),
            None => None,
        };
        Ok(EpochLog {
            epoch: epoch + 1,
            loss: sum.total / n,
            strong: sum.strong / n,
            weak: sum.weak / n,
            consistency: sum.cons / n,
            val_psds1,
        })
    }

    pub fn decode_params(&self) -> DecodeParams {
        decode_params(&self.cfg)
    }

    /// PSDS1 of the student on a held-out set.
    pub fn validate(&self, set: &EvalSet) -> Result<f64> {
        let posts = predict(&self.net, &self.student, &set.features, eval_batch(&self.cfg))?;
        let r = evaluate(
            &set.files,
            &posts,
            &set.truth,
            set.hours,
            self.cfg.model.classes,
            &self.cfg.eval,
            &self.decode_params(),
        )?;
        Ok(r.psds.score)
    }
}

/// Inference batch size.
pub fn eval_batch(cfg: &RunConfig) -> usize {
    cfg.train.batch_strong.max(1)
}

/// Output frame geometry of a run.
pub fn decode_params(cfg: &RunConfig) -> DecodeParams {
    DecodeParams {
        weak_mask: cfg.eval.weak_mask,
        median_length: cfg.eval.median_length,
        frame_seconds: cfg.frontend.frame_seconds() * cfg.model.time_pool() as f64,
        clip_seconds: cfg.frontend.clip_seconds,
    }
}

/// Full training run; `on_epoch` sees every log row as it is produced.
pub fn train(cfg: &RunConfig, data: &TrainData, mut on_epoch: impl FnMut(&EpochLog)) -> Result<TrainOutcome> {
    let mut tr = Trainer::new(cfg)?;
    let mut log = Vec::with_capacity(cfg.train.epochs);
    for e in 0..cfg.train.epochs {
        let row = tr.epoch(e, data)?;
        on_epoch(&row);
        log.push(row);
    }
    Ok(TrainOutcome {
        net: tr.net,
        student: tr.student,
        teacher: tr.teacher,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_cycles_and_covers() {
        let mut o = Order::new(5, 1, "strong", 0);
        let a = o.take(3);
        let b = o.take(3);
        let mut first: Vec<usize> = a.iter().chain(&b[..2]).copied().collect();
        first.sort_unstable();
        assert_eq!(first, vec![0, 1, 2, 3, 4]);
        let mut again = Order::new(5, 1, "strong", 0);
        assert_eq!(again.take(3), a);
        assert!(Order::new(0, 1, "weak", 0).take(4).is_empty());
    }

    #[test]
    fn log_line_format() {
        let l = EpochLog {
            epoch: 2,
            loss: 0.5,
            strong: 0.25,
            weak: 0.125,
            consistency: 0.0,
            val_psds1: None,
        };
        assert_eq!(l.line().split('\t').count(), EpochLog::HEADER.split('\t').count());
    }
}
