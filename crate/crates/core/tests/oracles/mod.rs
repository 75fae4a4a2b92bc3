//! Brute-force reference implementations shared by the integration tests
//! and the acceptance report. Nothing here calls the code under test except
//! to build modules and read their parameters or intermediate values.

#![allow(dead_code)]

pub mod fdy {
    use std::collections::BTreeMap;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use sed_tensor::{Graph, ParamStore, Tensor};
    use tfd_sed::config::AttentionConfig;
    use tfd_sed::dynamic::{fdy_forward, KernelAttention};
    use tfd_sed::nn::{Conv2d, ForwardCtx, Init};

    pub const TUPLES: [[usize; 4]; 4] = [[1, 1, 1, 1], [1, 1, 2, 3], [1, 2, 2, 3], [1, 2, 3, 3]];

    pub fn softmax_attention(b: usize, k: usize, f: usize, r: &mut ChaCha8Rng) -> Tensor {
        let mut a = Tensor::randn(&[b, k, f], r);
        for bi in 0..b {
            for fi in 0..f {
                let z: Vec<f64> = (0..k).map(|ki| (2.0 * a.get(&[bi, ki, fi])).exp()).collect();
                let s: f64 = z.iter().sum();
                for (ki, v) in z.iter().enumerate() {
                    a.set(&[bi, ki, fi], v / s);
                }
            }
        }
        a
    }

    /// For every (clip, frequency bin) the K basis kernels are blended into
    /// one kernel laid out on absolute frequency offsets, then applied directly.
    pub fn assembled_oracle(x: &Tensor, ws: &[Tensor], bs: &[Tensor], dil: &[usize], att: &Tensor) -> Tensor {
        let [b, cin, f, t] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
        let [cout, _, kf, kt] = [ws[0].shape()[0], ws[0].shape()[1], ws[0].shape()[2], ws[0].shape()[3]];
        let mut y = Tensor::zeros(&[b, cout, f, t]);
        for bi in 0..b {
            for fi in 0..f {
                let mut kernel: BTreeMap<isize, Vec<f64>> = BTreeMap::new();
                let mut bias = vec![0.0; cout];
                for (k, w) in ws.iter().enumerate() {
                    let a = att.get(&[bi, k, fi]);
                    for i in 0..kf {
                        let off = dil[k] as isize * (i as isize - (kf / 2) as isize);
                        let slot = kernel.entry(off).or_insert_with(|| vec![0.0; cout * cin * kt]);
                        for o in 0..cout {
                            for c in 0..cin {
                                for j in 0..kt {
                                    slot[(o * cin + c) * kt + j] += a * w.get(&[o, c, i, j]);
                                }
                            }
                        }
                    }
                    for (o, v) in bias.iter_mut().enumerate() {
                        *v += a * bs[k].get(&[o]);
                    }
                }
                for o in 0..cout {
                    for ti in 0..t {
                        let mut acc = bias[o];
                        for (&off, w) in &kernel {
                            let src = fi as isize + off;
                            if src < 0 || src >= f as isize {
                                continue;
                            }
                            for c in 0..cin {
                                for j in 0..kt {
                                    let st = ti as isize + j as isize - (kt / 2) as isize;
                                    if st >= 0 && st < t as isize {
                                        acc += w[(o * cin + c) * kt + j] * x.get(&[bi, c, src as usize, st as usize]);
                                    }
                                }
                            }
                        }
                        y.set(&[bi, o, fi, ti], acc);
                    }
                }
            }
        }
        y
    }

    fn randomize_biases(store: &mut ParamStore, convs: &[Conv2d], r: &mut ChaCha8Rng) {
        for c in convs {
            let id = c.b.expect("basis convs carry a bias");
            let n = store.tensor(id).numel();
            store.tensor_mut(id).data_mut().copy_from_slice(Tensor::randn(&[n], r).data());
        }
    }

    /// Deviation of the module from the oracle on one random small shape.
    pub fn deviation(dil: &[usize], seed: u64) -> f64 {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let (b, cin, cout) = (r.random_range(1..=2), r.random_range(1..=3), r.random_range(1..=3));
        let (f, t) = (r.random_range(3..=12), r.random_range(1..=6));
        let mut store = ParamStore::new();
        let mut init = Init::new(&mut store, r.random());
        let basis: Vec<Conv2d> = dil
            .iter()
            .enumerate()
            .map(|(k, &d)| Conv2d::new(&mut init, &format!("b{}", k), cin, cout, 3, 3, true, d).unwrap())
            .collect();
        randomize_biases(&mut store, &basis, &mut r);
        let x = Tensor::randn(&[b, cin, f, t], &mut r);
        let att = softmax_attention(b, dil.len(), f, &mut r);

        let mut g = Graph::new();
        let mut ctx = ForwardCtx::new(&mut g, &store, false);
        let xv = ctx.g.constant(x.clone());
        let av = ctx.g.constant(att.clone());
        let y = fdy_forward(&mut ctx, xv, &basis, av).unwrap();
        let got = ctx.g.value(y).clone();

        let ws: Vec<Tensor> = basis.iter().map(|c| store.tensor(c.w).clone()).collect();
        let bs: Vec<Tensor> = basis.iter().map(|c| store.tensor(c.b.unwrap()).clone()).collect();
        let want = assembled_oracle(&x, &ws, &bs, dil, &att);
        assert_eq!(got.shape(), want.shape());
        got.max_abs_diff(&want)
    }

    /// Largest `|Σ_k π_k − 1|` and smallest weight over random inputs.
    pub fn attention_sum_deviation(seeds: u64) -> (f64, f64) {
        let (mut worst, mut min) = (0.0f64, f64::INFINITY);
        for s in 0..seeds {
            let mut r = ChaCha8Rng::seed_from_u64(s);
            let (b, c, f, k) = (r.random_range(1..=3), r.random_range(1..=6), r.random_range(1..=9), r.random_range(2..=6));
            let mut store = ParamStore::new();
            let att = KernelAttention::new(&mut Init::new(&mut store, s), "att", c, k, &AttentionConfig::default(), 1e-5).unwrap();
            for train in [false, true] {
                let mut g = Graph::new();
                let mut ctx = ForwardCtx::new(&mut g, &store, train);
                let x = ctx.g.constant(Tensor::randn(&[b, c, f], &mut r).map(|v| 5.0 * v));
                let a = att.forward(&mut ctx, x).unwrap();
                let a = ctx.g.value(a);
                for bi in 0..b {
                    for fi in 0..f {
                        let sum: f64 = (0..k).map(|ki| a.get(&[bi, ki, fi])).sum();
                        worst = worst.max((sum - 1.0).abs());
                        min = (0..k).map(|ki| a.get(&[bi, ki, fi])).fold(min, f64::min);
                    }
                }
            }
        }
        (worst, min)
    }
}

pub mod tap {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use sed_tensor::{Graph, ParamStore, Tensor};
    use tfd_sed::config::{AttentionConfig, ContextPooling, LayerConfig, TapConfig, VelocityInput};
    use tfd_sed::dynamic::FreqDynamicLayer;
    use tfd_sed::nn::{ForwardCtx, Init};
    use tfd_sed::tap::{avg_pool_time, TapPooling};

    pub fn build(c: usize, seed: u64, cfg: &TapConfig) -> (TapPooling, ParamStore) {
        let mut store = ParamStore::new();
        let tap = TapPooling::new(&mut Init::new(&mut store, seed), "tap", c, cfg, 1e-5).unwrap();
        // Nonzero biases so every term of the block is exercised.
        let ids: Vec<_> = store
            .iter()
            .filter(|(_, p)| p.trainable && p.name.ends_with(".bias"))
            .map(|(id, _)| id)
            .collect();
        let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0xb1a5);
        for id in ids {
            let n = store.tensor(id).numel();
            store.tensor_mut(id).data_mut().copy_from_slice(Tensor::randn(&[n], &mut r).data());
        }
        (tap, store)
    }

    fn dims(x: &Tensor) -> [usize; 4] {
        [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]]
    }

    pub fn loop_time_diff(x: &Tensor) -> Tensor {
        let [b, c, f, t] = dims(x);
        Tensor::from_fn(&[b, c, f, t], |i| {
            if i[3] == 0 {
                0.0
            } else {
                x.get(i) - x.get(&[i[0], i[1], i[2], i[3] - 1])
            }
        })
    }

    pub fn loop_softmax_time(z: &Tensor) -> Tensor {
        let [b, c, f, t] = dims(z);
        let mut out = Tensor::zeros(&[b, c, f, t]);
        for bi in 0..b {
            for ci in 0..c {
                for fi in 0..f {
                    let m = (0..t).map(|ti| z.get(&[bi, ci, fi, ti])).fold(f64::NEG_INFINITY, f64::max);
                    let e: Vec<f64> = (0..t).map(|ti| (z.get(&[bi, ci, fi, ti]) - m).exp()).collect();
                    let s: f64 = e.iter().sum();
                    for (ti, v) in e.iter().enumerate() {
                        out.set(&[bi, ci, fi, ti], v / s);
                    }
                }
            }
        }
        out
    }

    /// Three-term pooled feature computed from the branch pre-activations.
    pub fn loop_pool(x: &Tensor, z_sal: &Tensor, z_ta: &Tensor, z_va: &Tensor) -> Tensor {
        let [b, c, f, t] = dims(x);
        let alpha = loop_softmax_time(z_ta);
        let beta = loop_softmax_time(z_va);
        Tensor::from_fn(&[b, c, f], |i| {
            let mut ta = 0.0;
            let mut va = 0.0;
            let mut avg = 0.0;
            for ti in 0..t {
                let at = [i[0], i[1], i[2], ti];
                let xs = 1.0 / (1.0 + (-z_sal.get(&at)).exp());
                ta += alpha.get(&at) * xs;
                va += beta.get(&at) * xs;
                avg += x.get(&at);
            }
            ta + va + avg / t as f64
        })
    }

    pub fn loop_oracle_deviation(shape: [usize; 4], seed: u64, input: VelocityInput, train: bool) -> f64 {
        let cfg = TapConfig {
            velocity_input: input,
            ..TapConfig::default()
        };
        let (tap, store) = build(shape[1], seed, &cfg);
        let x = Tensor::randn(&shape, &mut ChaCha8Rng::seed_from_u64(seed));
        let mut g = Graph::new();
        let mut ctx = ForwardCtx::new(&mut g, &store, train);
        let xv = ctx.g.constant(x.clone());
        let out = tap.forward(&mut ctx, xv).unwrap();
        let got = ctx.g.value(out.pooled).clone();

        let va_in = match input {
            VelocityInput::Delta => loop_time_diff(&x),
            VelocityInput::Raw => x.clone(),
        };
        let mut branch = |block: &tfd_sed::tap::TapBranch, input: &Tensor| {
            let v = ctx.g.constant(input.clone());
            let z = block.forward(&mut ctx, v).unwrap();
            ctx.g.value(z).clone()
        };
        let z_sal = branch(&tap.saliency, &x);
        let z_ta = branch(tap.time_att.as_ref().unwrap(), &x);
        let z_va = branch(tap.vel_att.as_ref().unwrap(), &va_in);
        got.max_abs_diff(&loop_pool(&x, &z_sal, &z_ta, &z_va))
    }

    /// Largest `|Σ_t w − 1|` over α and β for one random input.
    pub fn weight_sum_deviation(shape: [usize; 4], seed: u64, scale: f64, train: bool) -> f64 {
        let [b, c, f, t] = shape;
        let (tap, store) = build(c, seed, &TapConfig::default());
        let x = Tensor::randn(&shape, &mut ChaCha8Rng::seed_from_u64(seed)).map(|v| v * scale);
        let mut g = Graph::new();
        let mut ctx = ForwardCtx::new(&mut g, &store, train);
        let xv = ctx.g.constant(x);
        let out = tap.forward(&mut ctx, xv).unwrap();
        let mut worst = 0.0f64;
        for w in [out.alpha.unwrap(), out.beta.unwrap()] {
            let w = ctx.g.value(w);
            for bi in 0..b {
                for ci in 0..c {
                    for fi in 0..f {
                        let s: f64 = (0..t).map(|ti| w.get(&[bi, ci, fi, ti])).sum();
                        worst = worst.max((s - 1.0).abs());
                    }
                }
            }
        }
        worst
    }

    /// Largest `|Δx|` for an input constant along time.
    pub fn constant_input_velocity(shape: [usize; 4], seed: u64) -> f64 {
        let [b, c, f, t] = shape;
        let col = Tensor::randn(&[b, c, f], &mut ChaCha8Rng::seed_from_u64(seed));
        let x = Tensor::from_fn(&[b, c, f, t], |i| col.get(&i[..3]));
        let mut g = Graph::new();
        let xv = g.constant(x);
        let d = g.time_diff(xv).unwrap();
        g.value(d).max_abs()
    }

    /// TAP with both attention terms disabled against average pooling.
    pub fn disabled_terms_deviation(seed: u64) -> f64 {
        let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0x11);
        let (mut tap, store) = build(3, seed, &TapConfig::default());
        tap.ta_active = false;
        tap.va_active = false;
        let x = Tensor::randn(&[2, 3, 4, r.random_range(1..9)], &mut r);
        let mut g = Graph::new();
        let mut ctx = ForwardCtx::new(&mut g, &store, true);
        let xv = ctx.g.constant(x);
        let p = tap.forward(&mut ctx, xv).unwrap().pooled;
        let a = avg_pool_time(&mut ctx, xv).unwrap();
        ctx.g.value(p).max_abs_diff(ctx.g.value(a))
    }

    fn layer(pooling: ContextPooling, dil: Vec<usize>, statics: usize) -> LayerConfig {
        LayerConfig {
            static_channels: statics,
            branch_channels: 3,
            branches: vec![dil],
            pooling,
            pool: (1, 1),
        }
    }

    /// A TFD layer with its attention terms off against an FDY layer whose
    /// every tensor is copied from it.
    pub fn tfd_vs_fdy_deviation(seed: u64) -> f64 {
        let att = AttentionConfig::default();
        let tap = TapConfig::default();
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let cin = r.random_range(1..=4);
        let dil: Vec<usize> = (0..4).map(|_| r.random_range(1..=3)).collect();
        let statics = r.random_range(0..=2);
        let mut ts = ParamStore::new();
        let mut tfd = FreqDynamicLayer::new(
            &mut Init::new(&mut ts, seed),
            "l",
            cin,
            &layer(ContextPooling::Tap, dil.clone(), statics),
            3,
            &att,
            &tap,
            1e-5,
        )
        .unwrap();
        let mut fs = ParamStore::new();
        let fdy = FreqDynamicLayer::new(
            &mut Init::new(&mut fs, seed + 100),
            "l",
            cin,
            &layer(ContextPooling::Average, dil, statics),
            3,
            &att,
            &tap,
            1e-5,
        )
        .unwrap();
        let names: Vec<String> = fs.iter().map(|(_, p)| p.name.clone()).collect();
        for name in &names {
            let src = ts.id(name).unwrap_or_else(|| panic!("missing {}", name));
            let dst = fs.id(name).unwrap();
            fs.set(dst, ts.tensor(src).clone()).unwrap();
        }
        tfd.set_tap_terms(false, false);
        let x = Tensor::randn(&[2, cin, r.random_range(2..=8), r.random_range(1..=6)], &mut r);
        let mut worst = 0.0f64;
        for train in [false, true] {
            let mut g = Graph::new();
            let xv = g.constant(x.clone());
            let y_tfd = {
                let mut ctx = ForwardCtx::new(&mut g, &ts, train);
                tfd.forward(&mut ctx, xv).unwrap()
            };
            let y_fdy = {
                let mut ctx = ForwardCtx::new(&mut g, &fs, train);
                fdy.forward(&mut ctx, xv).unwrap()
            };
            worst = worst.max(g.value(y_tfd).max_abs_diff(g.value(y_fdy)));
        }
        worst
    }
}

pub mod psds {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use tfd_sed::config::PsdsConfig;
    use tfd_sed::eval::Event;

    pub fn ev(file: &str, class: usize, onset: f64, offset: f64) -> Event {
        Event {
            file: file.into(),
            class,
            onset,
            offset,
        }
    }

    fn overlap(a: &Event, b: &Event) -> f64 {
        if a.file != b.file || a.class != b.class {
            return 0.0;
        }
        (a.offset.min(b.offset) - a.onset.max(b.onset)).max(0.0)
    }

    /// Enumerates every detection/reference pair, counts true and false
    /// positives per class, and integrates the eTPR step curve interval by
    /// interval, sampling each interval at its midpoint.
    pub fn brute_psds(ops: &[Vec<Event>], truth: &[Event], classes: usize, hours: f64, cfg: &PsdsConfig) -> f64 {
        let n_gt: Vec<usize> = (0..classes).map(|c| truth.iter().filter(|g| g.class == c).count()).collect();
        let kept: Vec<usize> = (0..classes).filter(|&c| n_gt[c] > 0).collect();
        if kept.is_empty() {
            return 0.0;
        }
        let mut curves: Vec<Vec<(f64, f64)>> = vec![Vec::new(); classes];
        for dets in ops {
            let mut tp = vec![0usize; classes];
            let mut fp = vec![0usize; classes];
            let mut passing = Vec::new();
            for d in dets {
                let inter: f64 = truth.iter().map(|g| overlap(d, g)).sum();
                if inter / (d.offset - d.onset) >= cfg.dtc {
                    passing.push(d);
                } else {
                    fp[d.class] += 1;
                }
            }
            for g in truth {
                let cov: f64 = passing.iter().map(|d| overlap(g, d)).sum();
                if cov / (g.offset - g.onset) >= cfg.gtc {
                    tp[g.class] += 1;
                }
            }
            for &c in &kept {
                curves[c].push((fp[c] as f64 / hours, tp[c] as f64 / n_gt[c] as f64));
            }
        }
        let tpr_at = |c: usize, x: f64| {
            curves[c]
                .iter()
                .filter(|p| p.0 <= x)
                .map(|p| p.1)
                .fold(0.0, f64::max)
        };
        let mut cuts = vec![0.0, cfg.e_max];
        for &c in &kept {
            cuts.extend(curves[c].iter().map(|p| p.0).filter(|&x| x < cfg.e_max));
        }
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup();
        let mut area = 0.0;
        for w in cuts.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let t: Vec<f64> = kept.iter().map(|&c| tpr_at(c, mid)).collect();
            let n = t.len() as f64;
            let mean = t.iter().sum::<f64>() / n;
            let sd = (t.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            area += (mean - cfg.alpha_st * sd).max(0.0) * (w[1] - w[0]);
        }
        area / cfg.e_max
    }

    pub const FILES: [&str; 2] = ["a.wav", "b.wav"];

    /// Audio duration of an instance in hours.
    pub const HOURS: f64 = 2.0 * 10.0 / 3600.0;

    /// Tiny random instance: reference events and per-threshold detections,
    /// many of them jittered copies of reference events.
    pub fn instance(seed: u64, classes: usize) -> (Vec<Event>, Vec<Vec<Event>>) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let q = |r: &mut ChaCha8Rng| (r.random_range(0..=40) as f64) * 0.25;
        let interval = |r: &mut ChaCha8Rng| {
            let a = q(r).min(9.5);
            let b = (a + 0.25 * r.random_range(1..=16) as f64).min(10.0);
            (a, b)
        };
        let n_gt = r.random_range(1..=4);
        let truth: Vec<Event> = (0..n_gt)
            .map(|_| {
                let (a, b) = interval(&mut r);
                ev(FILES[r.random_range(0..2)], r.random_range(0..classes), a, b)
            })
            .collect();
        let n_ops = r.random_range(1..=5);
        let ops = (0..n_ops)
            .map(|_| {
                let n = r.random_range(0..=4);
                (0..n)
                    .map(|_| {
                        if r.random_bool(0.5) {
                            let g = &truth[r.random_range(0..truth.len())];
                            let j = 0.25 * r.random_range(-2..=2) as f64;
                            let (a, b) = ((g.onset + j).clamp(0.0, 9.75), (g.offset + j).clamp(0.0, 10.0));
                            ev(&g.file, g.class, a, b.max(a + 0.25))
                        } else {
                            let (a, b) = interval(&mut r);
                            ev(FILES[r.random_range(0..2)], r.random_range(0..classes), a, b)
                        }
                    })
                    .collect()
            })
            .collect();
        (truth, ops)
    }

    pub fn cfg(alpha_st: f64, e_max: f64) -> PsdsConfig {
        PsdsConfig {
            alpha_st,
            e_max,
            ..PsdsConfig::default()
        }
    }

    /// The scoring settings every instance is checked under.
    pub fn configs() -> [PsdsConfig; 4] {
        [cfg(1.0, 100.0), cfg(0.0, 100.0), cfg(1.0, 400.0), cfg(0.5, 1000.0)]
    }
}

pub mod post {
    /// Median of the symmetric-reflection neighbourhood, built by explicit
    /// index mirroring.
    pub fn brute_median(x: &[f64], len: usize) -> Vec<f64> {
        let n = x.len() as isize;
        let half = (len / 2) as isize;
        let mirror = |mut i: isize| loop {
            if i < 0 {
                i = -i - 1;
            } else if i >= n {
                i = 2 * n - 1 - i;
            } else {
                return i as usize;
            }
        };
        (0..n)
            .map(|i| {
                let mut w: Vec<f64> = (i - half..=i + half).map(|j| x[mirror(j)]).collect();
                w.sort_by(|a, b| a.partial_cmp(b).unwrap());
                w[half as usize]
            })
            .collect()
    }

    /// `(onset, offset)` of every maximal run of set frames, frame `i`
    /// spanning `[i·hop, (i+1)·hop)` clipped to the clip length.
    pub fn runs(bits: &[bool], hop: f64, clip: f64) -> Vec<(f64, f64)> {
        let mut want = Vec::new();
        let mut i = 0;
        while i < bits.len() {
            if bits[i] {
                let s = i;
                while i < bits.len() && bits[i] {
                    i += 1;
                }
                want.push((s as f64 * hop, (i as f64 * hop).min(clip)));
            } else {
                i += 1;
            }
        }
        want
    }
}

pub mod loss {
    pub fn bce(p: &[f64], y: &[f64]) -> f64 {
        let s: f64 = p.iter().zip(y).map(|(&p, &y)| -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())).sum();
        s / p.len() as f64
    }

    pub fn mse(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
    }

    /// Sigmoid ramp `w_max · exp(−5 (1 − e/E)²)`, flat at `w_max` from `E` on.
    pub fn ramp(epoch: f64, w_max: f64, ramp_epochs: usize) -> f64 {
        let p = (epoch / ramp_epochs as f64).min(1.0);
        w_max * (-5.0 * (1.0 - p) * (1.0 - p)).exp()
    }
}

pub mod stats {
    /// F from total and within sums of squares, computed independently of
    /// the between-group route the module takes.
    pub fn f_oracle(groups: &[Vec<f64>]) -> f64 {
        let all: Vec<f64> = groups.iter().flatten().copied().collect();
        let n = all.len() as f64;
        let k = groups.len() as f64;
        let sst = all.iter().map(|x| x * x).sum::<f64>() - all.iter().sum::<f64>().powi(2) / n;
        let ssw: f64 = groups
            .iter()
            .map(|g| g.iter().map(|x| x * x).sum::<f64>() - g.iter().sum::<f64>().powi(2) / g.len() as f64)
            .sum();
        ((sst - ssw) / (k - 1.0)) / (ssw / (n - k))
    }

    /// Pairwise significance by the critical-range rule
    /// `|m_i − m_j| > q · sqrt(MSW/2 · (1/n_i + 1/n_j))`.
    pub fn hsd_oracle(groups: &[Vec<f64>], q: f64) -> Vec<Vec<bool>> {
        let k = groups.len();
        let n: usize = groups.iter().map(Vec::len).sum();
        let means: Vec<f64> = groups.iter().map(|g| g.iter().sum::<f64>() / g.len() as f64).collect();
        let msw = groups
            .iter()
            .zip(&means)
            .map(|(g, m)| g.iter().map(|x| (x - m).powi(2)).sum::<f64>())
            .sum::<f64>()
            / (n - k) as f64;
        let mut s = vec![vec![false; k]; k];
        for i in 0..k {
            for j in 0..k {
                let se = (0.5 * msw * (1.0 / groups[i].len() as f64 + 1.0 / groups[j].len() as f64)).sqrt();
                s[i][j] = i != j && (means[i] - means[j]).abs() > q * se;
            }
        }
        s
    }

    /// Ordering string from significance flags alone: ascending means,
    /// `<` for a significant adjacent pair, `≤` when the pair differs in
    /// which groups it is separated from, `=` otherwise.
    pub fn ordering_oracle(names: &[&str], means: &[f64], sig: &[Vec<bool>]) -> String {
        let mut idx: Vec<usize> = (0..names.len()).collect();
        idx.sort_by(|&a, &b| means[a].partial_cmp(&means[b]).unwrap().then(a.cmp(&b)));
        let mut out = names[idx[0]].to_string();
        for w in idx.windows(2) {
            let (a, b) = (w[0], w[1]);
            let sym = if sig[a][b] {
                "<"
            } else if sig[a] != sig[b] {
                "≤"
            } else {
                "="
            };
            out += &format!(" {} {}", sym, names[b]);
        }
        out
    }
}
