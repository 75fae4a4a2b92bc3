//! Class-wise F1 under the intersection-based matching criteria.

use crate::eval::postprocess::Event;
use crate::eval::psds::match_events;

#[derive(Clone, Debug, PartialEq)]
pub struct ClassScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub n_gt: usize,
    pub n_det: usize,
}

/// Precision is the share of detections passing the tolerance criterion;
/// recall the share of ground-truth events covered. Classes without
/// ground truth get `None`.
pub fn classwise_f1(detections: &[Event], truth: &[Event], classes: usize, dtc: f64, gtc: f64) -> Vec<Option<ClassScore>> {
    let op = match_events(detections, truth, classes, dtc, gtc);
    (0..classes)
        .map(|c| {
            if op.n_gt[c] == 0 {
                return None;
            }
            let precision = if op.n_det[c] > 0 {
                op.dtc_pass[c] as f64 / op.n_det[c] as f64
            } else {
                0.0
            };
            let recall = op.tp[c] as f64 / op.n_gt[c] as f64;
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            Some(ClassScore {
                precision,
                recall,
                f1,
                n_gt: op.n_gt[c],
                n_det: op.n_det[c],
            })
        })
        .collect()
}

/// Mean F1 over classes that have ground truth.
pub fn macro_f1(scores: &[Option<ClassScore>]) -> f64 {
    let v: Vec<f64> = scores.iter().flatten().map(|s| s.f1).collect();
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
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
    fn perfect_and_silent() {
        let gt = vec![ev("a", 0, 0.0, 1.0), ev("a", 1, 2.0, 3.0)];
        let s = classwise_f1(&gt, &gt, 3, 0.7, 0.7);
        assert_eq!(s[0].as_ref().unwrap().f1, 1.0);
        assert!(s[2].is_none());
        let s = classwise_f1(&[], &gt, 3, 0.7, 0.7);
        assert_eq!(s[1].as_ref().unwrap().f1, 0.0);
    }

    #[test]
    fn three_event_toy_case() {
        // Truth: two class-0 events. Detections: one exact hit, one false alarm.
        let gt = vec![ev("a", 0, 0.0, 1.0), ev("a", 0, 4.0, 5.0)];
        let det = vec![ev("a", 0, 0.0, 1.0), ev("a", 0, 7.0, 8.0)];
        let s = classwise_f1(&det, &gt, 1, 0.7, 0.7)[0].clone().unwrap();
        assert_eq!((s.precision, s.recall), (0.5, 0.5));
        assert_eq!(s.f1, 0.5);
    }
}
