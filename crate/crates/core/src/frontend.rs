//! Waveform loading and log-mel feature extraction.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use sed_tensor::Tensor;

use crate::error::{invalid, Result, SedError};

#[derive(Clone, Debug, PartialEq)]
pub struct FrontendConfig {
    pub sample_rate: u32,
    pub clip_seconds: f64,
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    /// Exponent applied to the STFT magnitude before the mel projection.
    pub power: f64,
    pub log_floor: f64,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            clip_seconds: 10.0,
            n_fft: 2048,
            hop: 256,
            n_mels: 128,
            f_min: 0.0,
            f_max: 8000.0,
            power: 1.0,
            log_floor: 1e-10,
        }
    }
}

impl FrontendConfig {
    pub fn clip_samples(&self) -> usize {
        (self.clip_seconds * self.sample_rate as f64).round() as usize
    }

    /// Frame count of a centered STFT over `samples` samples.
    pub fn n_frames(&self, samples: usize) -> usize {
        samples / self.hop + 1
    }

    /// Seconds between consecutive feature frames.
    pub fn frame_seconds(&self) -> f64 {
        self.hop as f64 / self.sample_rate as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_fft < 2 || self.hop == 0 || self.n_mels == 0 {
            return Err(invalid("n_fft, hop and n_mels must be positive"));
        }
        if !(self.f_min >= 0.0 && self.f_min < self.f_max && self.f_max <= self.sample_rate as f64 / 2.0) {
            return Err(invalid(format!(
                "mel band [{}, {}] must lie within [0, Nyquist]",
                self.f_min, self.f_max
            )));
        }
        if self.clip_samples() <= self.n_fft / 2 {
            return Err(invalid("clip too short for reflect padding"));
        }
        Ok(())
    }
}

/// Scales to unit peak magnitude; all-zero input is returned unchanged.
pub fn normalize_waveform(samples: &[f64]) -> Vec<f64> {
    let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return samples.to_vec();
    }
    samples.iter().map(|v| v / peak).collect()
}

/// Zero-pads or truncates to exactly `len` samples.
pub fn pad_or_crop(samples: &[f64], len: usize) -> Vec<f64> {
    let mut out = samples[..samples.len().min(len)].to_vec();
    out.resize(len, 0.0);
    out
}

/// Periodic Hamming window of length `n`.
pub fn hamming(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular HTK-scale filterbank, `[n_mels][n_fft/2 + 1]`, unnormalized.
#[derive(Clone, Debug)]
pub struct MelFilterbank {
    pub weights: Vec<Vec<f64>>,
    /// Center frequency in Hz of each filter.
    pub centers: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(cfg: &FrontendConfig) -> Self {
        let n_freqs = cfg.n_fft / 2 + 1;
        let nyquist = cfg.sample_rate as f64 / 2.0;
        let freqs: Vec<f64> = (0..n_freqs)
            .map(|i| nyquist * i as f64 / (n_freqs - 1) as f64)
            .collect();
        let (m_lo, m_hi) = (hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max));
        let pts: Vec<f64> = (0..cfg.n_mels + 2)
            .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (cfg.n_mels + 1) as f64))
            .collect();
        let weights = (0..cfg.n_mels)
            .map(|m| {
                let (lo, c, hi) = (pts[m], pts[m + 1], pts[m + 2]);
                freqs
                    .iter()
                    .map(|&f| {
                        let up = (f - lo) / (c - lo);
                        let down = (hi - f) / (hi - c);
                        up.min(down).max(0.0)
                    })
                    .collect()
            })
            .collect();
        Self {
            weights,
            centers: pts[1..=cfg.n_mels].to_vec(),
        }
    }
}

/// Log-mel extractor with a cached FFT plan and filterbank.
pub struct LogMel {
    cfg: FrontendConfig,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    fbank: MelFilterbank,
    /// Per filter: first nonzero bin and weights from there.
    sparse: Vec<(usize, Vec<f64>)>,
}

impl LogMel {
    pub fn new(cfg: FrontendConfig) -> Result<Self> {
        cfg.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(cfg.n_fft);
        let fbank = MelFilterbank::new(&cfg);
        let sparse = fbank
            .weights
            .iter()
            .map(|w| {
                let first = w.iter().position(|&v| v > 0.0).unwrap_or(0);
                let last = w.iter().rposition(|&v| v > 0.0).map_or(first, |l| l + 1);
                (first, w[first..last.max(first)].to_vec())
            })
            .collect();
        Ok(Self {
            window: hamming(cfg.n_fft),
            cfg,
            fft,
            fbank,
            sparse,
        })
    }

    pub fn config(&self) -> &FrontendConfig {
        &self.cfg
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.fbank
    }

    /// Full pipeline for one clip: normalize, pad/crop, log-mel.
    /// Returns `[1, n_mels, frames]`.
    pub fn clip_features(&self, samples: &[f64]) -> Result<Tensor> {
        let w = pad_or_crop(&normalize_waveform(samples), self.cfg.clip_samples());
        self.logmel(&w)
    }

    /// Log-mel spectrogram of an already prepared waveform, `[1, n_mels, frames]`.
    pub fn logmel(&self, samples: &[f64]) -> Result<Tensor> {
        let pad = self.cfg.n_fft / 2;
        if samples.len() <= pad {
            return Err(invalid(format!(
                "waveform of {} samples is too short for reflect padding of {}",
                samples.len(),
                pad
            )));
        }
        let n = samples.len();
        // Reflect padding without repeating the edge sample.
        let at = |i: isize| -> f64 {
            let j = if i < 0 {
                -i
            } else if i >= n as isize {
                2 * (n as isize - 1) - i
            } else {
                i
            };
            samples[j as usize]
        };
        let frames = self.cfg.n_frames(n);
        let n_freqs = self.cfg.n_fft / 2 + 1;
        let n_mels = self.cfg.n_mels;
        let mut out = vec![0.0; n_mels * frames];
        let mut buf = vec![Complex::new(0.0, 0.0); self.cfg.n_fft];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut spec = vec![0.0; n_freqs];
        for t in 0..frames {
            let start = (t * self.cfg.hop) as isize - pad as isize;
            for (k, b) in buf.iter_mut().enumerate() {
                *b = Complex::new(at(start + k as isize) * self.window[k], 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (s, c) in spec.iter_mut().zip(&buf) {
                *s = c.norm().powf(self.cfg.power);
            }
            for (m, (first, w)) in self.sparse.iter().enumerate() {
                let e: f64 = w.iter().zip(&spec[*first..]).map(|(a, b)| a * b).sum();
                out[m * frames + t] = (e + self.cfg.log_floor).ln();
            }
        }
        Ok(Tensor::new(vec![1, n_mels, frames], out)?)
    }
}

/// Reads a mono WAV at the configured rate as samples in `[-1, 1]`.
pub fn read_wav(path: &Path, expected_rate: u32) -> Result<Vec<f64>> {
    let audio_err = |detail: String| SedError::Audio {
        path: path.to_path_buf(),
        detail,
    };
    let mut reader = hound::WavReader::open(path).map_err(|e| audio_err(e.to_string()))?;
    let spec = reader.spec();
    if spec.sample_rate != expected_rate {
        return Err(audio_err(format!(
            "sample rate {} Hz, expected {} Hz (resampling is not supported)",
            spec.sample_rate, expected_rate
        )));
    }
    if spec.channels != 1 {
        return Err(audio_err(format!("{} channels, expected mono", spec.channels)));
    }
    match spec.sample_format {
        hound::SampleFormat::Int => {
            let scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale).map_err(|e| audio_err(e.to_string())))
                .collect()
        }
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64).map_err(|e| audio_err(e.to_string())))
            .collect(),
    }
}

/// Writes mono 16-bit PCM, clipping to `[-1, 1]`.
pub fn write_wav(path: &Path, samples: &[f64], rate: u32) -> Result<()> {
    let audio_err = |e: hound::Error| SedError::Audio {
        path: path.to_path_buf(),
        detail: e.to_string(),
    };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(audio_err)?;
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        w.write_sample(v).map_err(audio_err)?;
    }
    w.finalize().map_err(audio_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_waveform(&[0.5, -0.25]), vec![1.0, -0.5]);
        assert_eq!(normalize_waveform(&[0.0; 4]), vec![0.0; 4]);
    }

    #[test]
    fn ten_seconds_gives_626_frames() {
        let lm = LogMel::new(FrontendConfig::default()).unwrap();
        let x: Vec<f64> = (0..160_000).map(|i| ((i * 7919) % 13) as f64 / 13.0 - 0.5).collect();
        let f = lm.clip_features(&x).unwrap();
        assert_eq!(f.shape(), &[1, 128, 626]);
    }

    #[test]
    fn silence_maps_to_log_floor() {
        let lm = LogMel::new(FrontendConfig::default()).unwrap();
        let f = lm.clip_features(&[0.0; 1000]).unwrap();
        let floor = 1e-10f64.ln();
        assert!(f.data().iter().all(|&v| v == floor));
    }

    #[test]
    fn filterbank_centers_increase_and_span_band() {
        let fb = MelFilterbank::new(&FrontendConfig::default());
        assert_eq!(fb.weights.len(), 128);
        assert!(fb.centers.windows(2).all(|w| w[0] < w[1]));
        assert!(fb.centers[0] > 0.0 && *fb.centers.last().unwrap() < 8000.0);
        assert!((mel_to_hz(hz_to_mel(1234.5)) - 1234.5).abs() < 1e-9);
    }

    #[test]
    fn rejects_band_above_nyquist() {
        let cfg = FrontendConfig {
            f_max: 9000.0,
            ..Default::default()
        };
        assert!(LogMel::new(cfg).is_err());
    }
}
