//! Intersection-based polyphonic detection scoring.

use std::collections::HashMap;

use crate::config::PsdsConfig;
use crate::eval::postprocess::Event;

/// Matching outcome of one operating point.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatingPoint {
    /// Per class: ground-truth events counted as detected.
    pub tp: Vec<usize>,
    /// Per class: detections failing the detection tolerance criterion.
    pub fp: Vec<usize>,
    /// Per class: detections passing it.
    pub dtc_pass: Vec<usize>,
    pub n_det: Vec<usize>,
    pub n_gt: Vec<usize>,
}

type Key<'a> = (&'a str, usize);

fn group(events: &[Event]) -> HashMap<Key<'_>, Vec<&Event>> {
    let mut m: HashMap<Key, Vec<&Event>> = HashMap::new();
    for e in events {
        m.entry((e.file.as_str(), e.class)).or_default().push(e);
    }
    m
}

/// Applies the detection tolerance and ground-truth coverage criteria.
pub fn match_events(detections: &[Event], truth: &[Event], classes: usize, dtc: f64, gtc: f64) -> OperatingPoint {
    let gt_by = group(truth);
    let mut op = OperatingPoint {
        tp: vec![0; classes],
        fp: vec![0; classes],
        dtc_pass: vec![0; classes],
        n_det: vec![0; classes],
        n_gt: vec![0; classes],
    };
    let mut passing: HashMap<Key, Vec<&Event>> = HashMap::new();
    for d in detections {
        op.n_det[d.class] += 1;
        let len = d.duration();
        let inter: f64 = gt_by
            .get(&(d.file.as_str(), d.class))
            .map_or(0.0, |gs| gs.iter().map(|g| d.overlap(g)).sum());
        if len > 0.0 && inter / len >= dtc {
            op.dtc_pass[d.class] += 1;
            passing.entry((d.file.as_str(), d.class)).or_default().push(d);
        } else {
            op.fp[d.class] += 1;
        }
    }
    for g in truth {
        op.n_gt[g.class] += 1;
        let len = g.duration();
        let covered: f64 = passing
            .get(&(g.file.as_str(), g.class))
            .map_or(0.0, |ds| ds.iter().map(|d| g.overlap(d)).sum());
        if len > 0.0 && covered / len >= gtc {
            op.tp[g.class] += 1;
        }
    }
    op
}

/// Full result of a PSDS computation.
#[derive(Clone, Debug)]
pub struct PsdsResult {
    pub score: f64,
    /// Classes with ground truth, in index order.
    pub classes: Vec<usize>,
    /// Per operating point `(fpr per class, tpr per class)` over `classes`.
    pub points: Vec<(Vec<f64>, Vec<f64>)>,
}

/// Area under the effective TPR vs FP-per-hour step curve on `[0, e_max]`,
/// normalized by `e_max`. Classes without ground truth are excluded.
pub fn psds(detections: &[Vec<Event>], truth: &[Event], classes: usize, hours: f64, cfg: &PsdsConfig) -> PsdsResult {
    let ops: Vec<OperatingPoint> = detections
        .iter()
        .map(|d| match_events(d, truth, classes, cfg.dtc, cfg.gtc))
        .collect();
    let mut gt_count = vec![0usize; classes];
    truth.iter().for_each(|g| gt_count[g.class] += 1);
    let kept: Vec<usize> = (0..classes).filter(|&c| gt_count[c] > 0).collect();
    let points: Vec<(Vec<f64>, Vec<f64>)> = ops
        .iter()
        .map(|op| {
            let fpr = kept.iter().map(|&c| op.fp[c] as f64 / hours).collect();
            let tpr = kept.iter().map(|&c| op.tp[c] as f64 / gt_count[c] as f64).collect();
            (fpr, tpr)
        })
        .collect();
    if kept.is_empty() || hours <= 0.0 {
        return PsdsResult {
            score: 0.0,
            classes: kept,
            points,
        };
    }
    // Breakpoints of the step curve within [0, e_max).
    let mut xs: Vec<f64> = vec![0.0];
    for (fpr, _) in &points {
        xs.extend(fpr.iter().copied().filter(|&x| x < cfg.e_max));
    }
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite rates"));
    xs.dedup();
    let n = kept.len() as f64;
    let mut area = 0.0;
    for (j, &x) in xs.iter().enumerate() {
        let next = xs.get(j + 1).copied().unwrap_or(cfg.e_max);
        let tprs: Vec<f64> = (0..kept.len())
            .map(|ci| {
                points
                    .iter()
                    .filter(|(f, _)| f[ci] <= x)
                    .map(|(_, t)| t[ci])
                    .fold(0.0, f64::max)
            })
            .collect();
        let mean = tprs.iter().sum::<f64>() / n;
        let var = tprs.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n;
        let etpr = (mean - cfg.alpha_st * var.sqrt()).max(0.0);
        area += etpr * (next - x);
    }
    PsdsResult {
        score: area / cfg.e_max,
        classes: kept,
        points,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(file: &str, class: usize, on: f64, off: f64) -> Event {
        Event {
            file: file.into(),
            class,
            onset: on,
            offset: off,
        }
    }

    #[test]
    fn perfect_and_empty() {
        let gt = vec![ev("a", 0, 1.0, 2.0), ev("b", 1, 3.0, 5.0)];
        let cfg = PsdsConfig::default();
        let perfect = psds(&vec![gt.clone(); 3], &gt, 2, 0.01, &cfg);
        assert!((perfect.score - 1.0).abs() < 1e-12);
        let empty = psds(&vec![Vec::new(); 3], &gt, 2, 0.01, &cfg);
        assert_eq!(empty.score, 0.0);
    }

    #[test]
    fn fragmented_detections_pool_intersections() {
        // Two halves each fully inside the event jointly cover it.
        let gt = vec![ev("a", 0, 0.0, 2.0)];
        let det = vec![ev("a", 0, 0.0, 1.0), ev("a", 0, 1.0, 2.0)];
        let op = match_events(&det, &gt, 1, 0.7, 0.7);
        assert_eq!(op.tp, vec![1]);
        assert_eq!(op.fp, vec![0]);
        // A detection mostly outside the event fails the tolerance criterion.
        let op = match_events(&[ev("a", 0, 1.5, 4.0)], &gt, 1, 0.7, 0.7);
        assert_eq!((op.tp[0], op.fp[0]), (0, 1));
    }
}
