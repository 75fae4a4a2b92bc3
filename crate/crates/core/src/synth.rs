//! Synthetic polyphonic dataset with exact annotations.
//!
//! Ten classes: five transient archetypes and five quasi-stationary ones.
//! Event boundaries fall on whole milliseconds, so manifests written with
//! three decimals are exact.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sed_tensor::rng::{stream_key, stream_rng};

use crate::config::parse_kv;
use crate::data::{write_strong, write_unlabeled, write_weak, ClassMap, DataLayout, StrongClip};
use crate::error::{config_err, Result, SedError};
use crate::eval::Event;
use crate::frontend::write_wav;

pub const CLASS_NAMES: [&str; 10] = [
    "click_train",
    "chirp_burst",
    "noise_burst",
    "plosive_pulse",
    "decaying_strike",
    "steady_tone",
    "band_noise",
    "hum",
    "am_tone",
    "broadband_wash",
];

/// Number of transient classes; they come first in [`CLASS_NAMES`].
pub const TRANSIENT: usize = 5;

pub fn class_map() -> ClassMap {
    ClassMap::new(CLASS_NAMES.iter().map(|s| s.to_string()).collect()).expect("static names are valid")
}

pub fn is_transient(class: usize) -> bool {
    class < TRANSIENT
}

/// Split names with the manifest each is written to.
pub const SPLITS: [&str; 5] = ["strong", "weak", "unlabeled", "validation", "test"];

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub seed: u64,
    pub sample_rate: u32,
    pub clip_seconds: f64,
    /// Clips per split, in [`SPLITS`] order.
    pub clips: [usize; 5],
    pub min_events: usize,
    pub max_events: usize,
    /// Event level relative to the nominal background level, in dB.
    pub snr_db: (f64, f64),
    /// Background noise RMS; 0 gives silent backgrounds.
    pub noise_rms: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            sample_rate: 16_000,
            clip_seconds: 10.0,
            clips: [24, 24, 48, 16, 16],
            min_events: 1,
            max_events: 2,
            snr_db: (6.0, 24.0),
            noise_rms: 0.01,
        }
    }
}

/// Nominal background RMS the SNR refers to.
const REFERENCE_RMS: f64 = 0.01;
/// Raised-cosine edge length.
const FADE_SECONDS: f64 = 0.005;

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.max_events > 2 || self.min_events > self.max_events {
            return Err(config_err("events per clip must satisfy min <= max <= 2"));
        }
        if self.clip_seconds < 6.0 || self.sample_rate < 8000 {
            return Err(config_err("clips must be at least 6 s at 8 kHz or more"));
        }
        if self.snr_db.0 > self.snr_db.1 || self.noise_rms < 0.0 {
            return Err(config_err("bad SNR range or noise level"));
        }
        Ok(())
    }

    pub fn serialize(&self) -> String {
        let mut s = format!(
            "seed = {}\nsample_rate = {}\nclip_seconds = {}\n",
            self.seed, self.sample_rate, self.clip_seconds
        );
        for (name, n) in SPLITS.iter().zip(self.clips) {
            s.push_str(&format!("clips.{} = {}\n", name, n));
        }
        s.push_str(&format!(
            "min_events = {}\nmax_events = {}\nsnr_db = {},{}\nnoise_rms = {}\n",
            self.min_events, self.max_events, self.snr_db.0, self.snr_db.1, self.noise_rms
        ));
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = parse_kv(text)?;
        let mut spec = Self::default();
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| config_err(format!("{}: cannot parse `{}`", key, v)))
        }
        if let Some(v) = map.remove("seed") {
            spec.seed = num("seed", &v)?;
        }
        if let Some(v) = map.remove("sample_rate") {
            spec.sample_rate = num("sample_rate", &v)?;
        }
        if let Some(v) = map.remove("clip_seconds") {
            spec.clip_seconds = num("clip_seconds", &v)?;
        }
        for (i, name) in SPLITS.iter().enumerate() {
            let key = format!("clips.{}", name);
            if let Some(v) = map.remove(&key) {
                spec.clips[i] = num(&key, &v)?;
            }
        }
        if let Some(v) = map.remove("min_events") {
            spec.min_events = num("min_events", &v)?;
        }
        if let Some(v) = map.remove("max_events") {
            spec.max_events = num("max_events", &v)?;
        }
        if let Some(v) = map.remove("snr_db") {
            let (a, b) = v.split_once(',').ok_or_else(|| config_err("snr_db: expected `lo,hi`"))?;
            spec.snr_db = (num("snr_db", a.trim())?, num("snr_db", b.trim())?);
        }
        if let Some(v) = map.remove("noise_rms") {
            spec.noise_rms = num("noise_rms", &v)?;
        }
        if let Some(k) = map.keys().next() {
            return Err(config_err(format!("unknown synth key `{}`", k)));
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Duration range in milliseconds per class.
fn duration_ms(class: usize) -> (u64, u64) {
    match class {
        0 => (300, 1000),
        1 => (150, 600),
        2 => (100, 500),
        3 => (80, 300),
        4 => (250, 900),
        _ => (1500, 5000),
    }
}

/// Second-order resonant band-pass (RBJ cookbook, constant peak gain).
fn bandpass(x: &[f64], f0: f64, q: f64, sr: f64) -> Vec<f64> {
    let w0 = 2.0 * PI * f0 / sr;
    let alpha = w0.sin() / (2.0 * q);
    let a0 = 1.0 + alpha;
    let (b0, b2) = (alpha / a0, -alpha / a0);
    let (a1, a2) = (-2.0 * w0.cos() / a0, (1.0 - alpha) / a0);
    let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
    x.iter()
        .map(|&v| {
            let y = b0 * v + b2 * x2 - a1 * y1 - a2 * y2;
            x2 = x1;
            x1 = v;
            y2 = y1;
            y1 = y;
            y
        })
        .collect()
}

/// Unit-RMS waveform of `n` samples for `class`.
pub fn render_event(class: usize, n: usize, sr: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let t = |i: usize| i as f64 / sr;
    let mut x: Vec<f64> = match class {
        0 => {
            let period = (rng.random_range(0.02..0.035) * sr) as usize;
            let click = (0.002 * sr) as usize;
            let mut x = vec![0.0; n];
            let mut starts: Vec<usize> = (0..).map(|k| k * period).take_while(|&s| s + click <= n).collect();
            if n >= click {
                starts.push(n - click);
            }
            for s in starts {
                for j in 0..click.min(n - s) {
                    x[s + j] += gauss(rng) * (-(j as f64) / (0.3 * click as f64)).exp() + 0.2;
                }
            }
            x
        }
        1 => {
            let f0 = rng.random_range(800.0..2500.0);
            let f1 = rng.random_range(3000.0..6000.0);
            let d = n as f64 / sr;
            (0..n)
                .map(|i| (2.0 * PI * (f0 * t(i) + 0.5 * (f1 - f0) / d * t(i) * t(i))).sin())
                .collect()
        }
        2 => (0..n).map(|_| gauss(rng)).collect(),
        3 => {
            let f = rng.random_range(80.0..200.0);
            let tau = n as f64 / sr / 2.5;
            (0..n)
                .map(|i| ((2.0 * PI * f * t(i)).sin() + 0.5 * gauss(rng)) * (-t(i) / tau).exp())
                .collect()
        }
        4 => {
            let f = rng.random_range(200.0..800.0);
            let tau = n as f64 / sr / 3.0;
            (0..n)
                .map(|i| {
                    let s: f64 = [1.0, 2.76, 5.4].iter().enumerate().map(|(k, r)| (2.0 * PI * f * r * t(i)).sin() / (k + 1) as f64).sum();
                    s * (-t(i) / tau).exp()
                })
                .collect()
        }
        5 => {
            let f = rng.random_range(300.0..2000.0);
            (0..n)
                .map(|i| (2.0 * PI * f * t(i)).sin() + 0.3 * (4.0 * PI * f * t(i)).sin())
                .collect()
        }
        6 => {
            let fc = rng.random_range(500.0..4000.0);
            let w: Vec<f64> = (0..n).map(|_| gauss(rng)).collect();
            bandpass(&w, fc, 4.0, sr)
        }
        7 => {
            let f = if rng.random_bool(0.5) { 50.0 } else { 60.0 };
            (0..n)
                .map(|i| (1..=8).map(|h| (2.0 * PI * f * h as f64 * t(i)).sin() / h as f64).sum())
                .collect()
        }
        8 => {
            let fc = rng.random_range(400.0..1500.0);
            let fm = rng.random_range(2.0..6.0);
            (0..n)
                .map(|i| (1.0 + 0.8 * (2.0 * PI * fm * t(i)).sin()) * (2.0 * PI * fc * t(i)).sin())
                .collect()
        }
        _ => {
            let mut lp = 0.0;
            let swell = rng.random_range(0.2..0.6);
            (0..n)
                .map(|i| {
                    lp = 0.9 * lp + 0.1 * gauss(rng);
                    (lp + 0.3 * gauss(rng)) * (1.0 + 0.5 * (2.0 * PI * swell * t(i)).sin())
                })
                .collect()
        }
    };
    let fade = ((FADE_SECONDS * sr) as usize).min(n / 2);
    for i in 0..fade {
        let g = 0.5 - 0.5 * (PI * (i as f64 + 1.0) / (fade as f64 + 1.0)).cos();
        x[i] *= g;
        x[n - 1 - i] *= g;
    }
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / n.max(1) as f64).sqrt();
    if rms > 0.0 {
        x.iter_mut().for_each(|v| *v /= rms);
    }
    x
}

/// One synthesized clip.
#[derive(Clone, Debug)]
pub struct SynthClip {
    pub samples: Vec<f64>,
    pub events: Vec<Event>,
}

/// Clip `index` of `split`, drawn from its own random stream.
pub fn synth_clip(spec: &SynthSpec, split: &str, index: usize, file: &str) -> SynthClip {
    let mut rng = stream_rng(stream_key(spec.seed, &format!("synth.{}", split), index as u64));
    let sr = spec.sample_rate as f64;
    let total_ms = (spec.clip_seconds * 1000.0).round() as u64;
    let n_total = (total_ms as f64 * sr / 1000.0).round() as usize;
    let mut out: Vec<f64> = (0..n_total).map(|_| spec.noise_rms * gauss(&mut rng)).collect();
    let n_events = rng.random_range(spec.min_events..=spec.max_events);
    let classes = sample(&mut rng, CLASS_NAMES.len(), n_events).into_vec();
    let mut events = Vec::with_capacity(n_events);
    for class in classes {
        let (lo, hi) = duration_ms(class);
        let dur = rng.random_range(lo..=hi).min(total_ms);
        let start = rng.random_range(0..=total_ms - dur);
        let (a, b) = ((start as f64 * sr / 1000.0) as usize, ((start + dur) as f64 * sr / 1000.0) as usize);
        let snr = rng.random_range(spec.snr_db.0..=spec.snr_db.1);
        let gain = REFERENCE_RMS * 10f64.powf(snr / 20.0);
        let wave = render_event(class, b - a, sr, &mut rng);
        out[a..b].iter_mut().zip(&wave).for_each(|(o, w)| *o += gain * w);
        events.push(Event {
            file: file.to_string(),
            class,
            onset: start as f64 / 1000.0,
            offset: (start + dur) as f64 / 1000.0,
        });
    }
    events.sort_by(|x, y| x.onset.partial_cmp(&y.onset).expect("finite").then(x.class.cmp(&y.class)));
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.9 {
        out.iter_mut().for_each(|v| *v *= 0.9 / peak);
    }
    SynthClip { samples: out, events }
}

/// Writes audio, manifests and the class list under `out`.
pub fn synth(spec: &SynthSpec, out: &Path) -> Result<()> {
    spec.validate()?;
    let layout = DataLayout::new(out);
    let classes = class_map();
    fs::create_dir_all(out).map_err(|e| SedError::io(out, e))?;
    classes.write(&layout.classes())?;
    for (split, &count) in SPLITS.iter().zip(&spec.clips) {
        let dir = layout.audio(split);
        fs::create_dir_all(&dir).map_err(|e| SedError::io(&dir, e))?;
        let mut rows = Vec::with_capacity(count);
        for i in 0..count {
            let file = format!("{}_{:04}.wav", split, i);
            let clip = synth_clip(spec, split, i, &file);
            write_wav(&dir.join(&file), &clip.samples, spec.sample_rate)?;
            rows.push(StrongClip { file, events: clip.events });
        }
        let path = layout.manifest(split);
        match *split {
            "weak" => {
                let weak: Vec<(String, Vec<usize>)> = rows
                    .iter()
                    .map(|r| {
                        let mut c: Vec<usize> = r.events.iter().map(|e| e.class).collect();
                        c.sort_unstable();
                        c.dedup();
                        (r.file.clone(), c)
                    })
                    .collect();
                write_weak(&path, &weak, &classes)?;
            }
            "unlabeled" => write_unlabeled(&path, &rows.iter().map(|r| r.file.clone()).collect::<Vec<_>>())?,
            _ => write_strong(&path, &rows, &classes)?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_roundtrip_and_unknown_key() {
        let mut s = SynthSpec::default();
        s.seed = 9;
        s.clips = [1, 2, 3, 4, 5];
        s.snr_db = (0.0, 10.5);
        assert_eq!(SynthSpec::parse(&s.serialize()).unwrap(), s);
        assert!(SynthSpec::parse("bogus = 1").is_err());
        assert!(SynthSpec::parse("max_events = 3").is_err());
    }

    #[test]
    fn events_have_exact_support_and_bounded_polyphony() {
        let spec = SynthSpec {
            noise_rms: 0.0,
            ..SynthSpec::default()
        };
        for i in 0..20 {
            let c = synth_clip(&spec, "strong", i, "x.wav");
            assert!((1..=2).contains(&c.events.len()));
            for e in &c.events {
                assert!(e.onset >= 0.0 && e.offset <= 10.0 && e.offset > e.onset);
                let a = (e.onset * 16000.0).round() as usize;
                assert!(c.samples[a..a + 40].iter().any(|v| v.abs() > 0.0));
            }
        }
    }

    #[test]
    fn rendered_events_have_unit_rms() {
        let mut rng = stream_rng(1);
        for class in 0..10 {
            let x = render_event(class, 4000, 16000.0, &mut rng);
            let rms = (x.iter().map(|v| v * v).sum::<f64>() / 4000.0).sqrt();
            assert!((rms - 1.0).abs() < 1e-9, "class {}", class);
            assert!(x.iter().all(|v| v.is_finite()));
        }
    }
}
