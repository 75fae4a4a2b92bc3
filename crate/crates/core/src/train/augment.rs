//! Data augmentation on log-mel features `[n_mels, frames]` and pooled
//! strong labels `[classes, frames / pool]`.

use rand::Rng;
use rand_distr::{Beta, Distribution};

fn roll_rows(data: &mut [f64], row_len: usize, shift: isize) {
    if row_len == 0 {
        return;
    }
    let s = shift.rem_euclid(row_len as isize) as usize;
    for row in data.chunks_mut(row_len) {
        row.rotate_right(s);
    }
}

/// Circular shift along time: `x'[t] = x[t - shift]`. Labels move by
/// `floor(shift / pool)` pooled frames.
pub fn frameshift(features: &mut [f64], n_mels: usize, labels: Option<&mut [f64]>, classes: usize, shift: isize, pool: usize) {
    roll_rows(features, features.len() / n_mels.max(1), shift);
    if let Some(y) = labels {
        roll_rows(y, y.len() / classes.max(1), shift.div_euclid(pool.max(1) as isize));
    }
}

/// Convex combination `lam · rows[i] + (1 - lam) · rows[perm[i]]`.
pub fn mixup(rows: &[Vec<f64>], perm: &[usize], lam: f64) -> Vec<Vec<f64>> {
    rows.iter()
        .zip(perm)
        .map(|(a, &j)| a.iter().zip(&rows[j]).map(|(x, y)| lam * x + (1.0 - lam) * y).collect())
        .collect()
}

/// Mixing coefficient `λ ~ Beta(alpha, alpha)`.
pub fn mixup_lambda<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    Beta::new(alpha, alpha).expect("positive mixup alpha").sample(rng)
}

/// Zeroes pooled label frames `[start, start + len)` and the matching
/// feature frames `[pool · start, pool · (start + len))`.
pub fn time_mask(features: &mut [f64], n_mels: usize, labels: Option<&mut [f64]>, classes: usize, start: usize, len: usize, pool: usize) {
    let t = features.len() / n_mels.max(1);
    let (a, b) = ((pool * start).min(t), (pool * (start + len)).min(t));
    for row in features.chunks_mut(t.max(1)) {
        row[a..b].iter_mut().for_each(|v| *v = 0.0);
    }
    if let Some(y) = labels {
        let tp = y.len() / classes.max(1);
        let (a, b) = (start.min(tp), (start + len).min(tp));
        for row in y.chunks_mut(tp.max(1)) {
            row[a..b].iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

/// Frequency bands with a constant gain each.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterDraw {
    /// Band edges `0 = e_0 < e_1 < … < e_n = n_mels`.
    pub edges: Vec<usize>,
    pub gains_db: Vec<f64>,
}

impl FilterDraw {
    pub fn draw<R: Rng + ?Sized>(n_mels: usize, bands: (usize, usize), gain_db: f64, rng: &mut R) -> Self {
        let hi = bands.1.min(n_mels).max(1);
        let lo = bands.0.clamp(1, hi);
        let n = rng.random_range(lo..=hi);
        let mut cuts = rand::seq::index::sample(rng, n_mels - 1, n - 1).into_vec();
        cuts.iter_mut().for_each(|c| *c += 1);
        cuts.sort_unstable();
        let mut edges = vec![0];
        edges.extend(cuts);
        edges.push(n_mels);
        let gains_db = (0..n).map(|_| rng.random_range(-gain_db..=gain_db)).collect();
        Self { edges, gains_db }
    }
}

/// Adds `g · ln(10) / 20` to every bin of each band: a gain of `g` dB on a
/// natural-log magnitude spectrogram.
pub fn filter_augment(features: &[f64], n_mels: usize, draw: &FilterDraw) -> Vec<f64> {
    let t = features.len() / n_mels.max(1);
    let mut out = features.to_vec();
    for (band, g) in draw.edges.windows(2).zip(&draw.gains_db) {
        let shift = g * std::f64::consts::LN_10 / 20.0;
        for m in band[0]..band[1] {
            out[m * t..(m + 1) * t].iter_mut().for_each(|v| *v += shift);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shift_zero_and_full_period_are_identity() {
        let x: Vec<f64> = (0..24).map(f64::from).collect();
        for s in [0, 8, -8] {
            let mut y = x.clone();
            frameshift(&mut y, 3, None, 1, s, 4);
            assert_eq!(y, x);
        }
    }

    #[test]
    fn mixup_extremes() {
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(mixup(&rows, &[1, 0], 1.0), rows);
        assert_eq!(mixup(&rows, &[1, 0], 0.5), vec![vec![0.5, 0.5]; 2]);
    }

    #[test]
    fn zero_length_mask_is_identity() {
        let mut x = vec![1.0; 16];
        let mut y = vec![1.0; 4];
        time_mask(&mut x, 2, Some(&mut y), 1, 1, 0, 2);
        assert!(x.iter().chain(&y).all(|&v| v == 1.0));
    }

    #[test]
    fn filter_bands_partition_and_uniform_gain() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let d = FilterDraw::draw(128, (2, 5), 6.0, &mut rng);
            assert_eq!((d.edges[0], *d.edges.last().unwrap()), (0, 128));
            assert!(d.edges.windows(2).all(|w| w[0] < w[1]));
            assert!((2..=5).contains(&d.gains_db.len()));
            assert!(d.gains_db.iter().all(|g| g.abs() <= 6.0));
        }
        let x = vec![0.25; 12];
        let one = FilterDraw {
            edges: vec![0, 4],
            gains_db: vec![0.0],
        };
        assert_eq!(filter_augment(&x, 4, &one), x);
        let all = FilterDraw {
            edges: vec![0, 1, 4],
            gains_db: vec![20.0, 20.0],
        };
        let y = filter_augment(&x, 4, &all);
        assert!(y.iter().all(|v| (v - 0.25 - std::f64::consts::LN_10).abs() < 1e-12));
    }
}
