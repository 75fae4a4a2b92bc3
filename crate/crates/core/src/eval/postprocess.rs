//! Posterior tracks to event lists: weak masking, thresholding, median
//! filtering and run segmentation.

use crate::config::WeakMask;
use crate::error::{invalid, Result};

/// One detected or annotated event.
#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    pub file: String,
    pub class: usize,
    pub onset: f64,
    pub offset: f64,
}

impl Event {
    pub fn duration(&self) -> f64 {
        self.offset - self.onset
    }

    pub fn overlap(&self, other: &Event) -> f64 {
        (self.offset.min(other.offset) - self.onset.max(other.onset)).max(0.0)
    }
}

/// Caps strong posteriors `[C, T]` by the clip-level weak posteriors `[C]`.
pub fn weak_mask(strong: &[f64], weak: &[f64], mode: WeakMask) -> Vec<f64> {
    let t = strong.len() / weak.len().max(1);
    strong
        .chunks(t.max(1))
        .zip(weak)
        .flat_map(|(row, &w)| {
            row.iter().map(move |&s| match mode {
                WeakMask::Min => s.min(w),
                WeakMask::Gate => {
                    if s > w {
                        0.0
                    } else {
                        s
                    }
                }
            })
        })
        .collect()
}

/// Symmetric reflection `d c b a | a b c d | d c b a`.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// Sliding median of odd `length`, edges extended by reflection.
pub fn median_filter(track: &[f64], length: usize) -> Result<Vec<f64>> {
    if length == 0 || length % 2 == 0 {
        return Err(invalid(format!("median filter length must be odd, got {}", length)));
    }
    let n = track.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let half = (length / 2) as isize;
    let mut window = vec![0.0; length];
    Ok((0..n as isize)
        .map(|i| {
            for (k, w) in window.iter_mut().enumerate() {
                *w = track[reflect(i - half + k as isize, n)];
            }
            window.sort_by(|a, b| a.partial_cmp(b).expect("finite posteriors"));
            window[length / 2]
        })
        .collect())
}

pub fn binarize(track: &[f64], threshold: f64) -> Vec<f64> {
    track.iter().map(|&v| if v >= threshold { 1.0 } else { 0.0 }).collect()
}

/// Maximal runs of active frames as `(first, last)` inclusive indices.
pub fn runs(binary: &[f64]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &v) in binary.iter().enumerate() {
        match (v > 0.5, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, binary.len() - 1));
    }
    out
}

/// Converts frame runs into events; frame `i` spans `[i·hop, (i+1)·hop)` seconds.
pub fn segment(file: &str, class: usize, binary: &[f64], frame_seconds: f64, clip_seconds: f64) -> Vec<Event> {
    runs(binary)
        .into_iter()
        .map(|(s, e)| Event {
            file: file.to_string(),
            class,
            onset: (s as f64 * frame_seconds).min(clip_seconds),
            offset: ((e + 1) as f64 * frame_seconds).min(clip_seconds),
        })
        .filter(|ev| ev.offset > ev.onset)
        .collect()
}

/// Decoding settings for one clip.
#[derive(Clone, Copy, Debug)]
pub struct DecodeParams {
    pub weak_mask: WeakMask,
    pub median_length: usize,
    pub frame_seconds: f64,
    pub clip_seconds: f64,
}

/// Strong `[C, T]` and weak `[C]` posteriors of one clip to events at `threshold`.
pub fn decode_clip(file: &str, strong: &[f64], weak: &[f64], threshold: f64, p: &DecodeParams) -> Result<Vec<Event>> {
    let classes = weak.len();
    if classes == 0 || strong.len() % classes != 0 {
        return Err(invalid("strong posteriors do not match the class count"));
    }
    let t = strong.len() / classes;
    let masked = weak_mask(strong, weak, p.weak_mask);
    let mut out = Vec::new();
    for c in 0..classes {
        let bin = binarize(&masked[c * t..(c + 1) * t], threshold);
        let filtered = median_filter(&bin, p.median_length)?;
        out.extend(segment(file, c, &filtered, p.frame_seconds, p.clip_seconds));
    }
    Ok(out)
}
