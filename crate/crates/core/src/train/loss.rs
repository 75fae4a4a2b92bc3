//! Supervised, consistency and total objectives.

use sed_tensor::{Graph, Tensor, Var};

use crate::config::StopGrad;
use crate::error::{invalid, Result};
use crate::model::Predictions;

/// Targets of one batch. Rows are ordered strong, weak, unlabeled.
#[derive(Clone, Debug)]
pub struct BatchTargets {
    /// `[n_strong, classes, frames]`
    pub strong: Option<Tensor>,
    /// `[n_weak, classes]`
    pub weak: Option<Tensor>,
}

impl BatchTargets {
    pub fn n_strong(&self) -> usize {
        self.strong.as_ref().map_or(0, |t| t.shape()[0])
    }

    pub fn n_weak(&self) -> usize {
        self.weak.as_ref().map_or(0, |t| t.shape()[0])
    }
}

/// Loss nodes of one step. Absent supervised terms count as zero.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub total: Var,
    pub strong: Option<Var>,
    pub weak: Option<Var>,
    pub consistency: Var,
}

/// BCE of strong predictions on the strong rows and of weak predictions on
/// the weak rows.
pub fn supervised_terms(g: &mut Graph, student: &Predictions, targets: &BatchTargets) -> Result<(Option<Var>, Option<Var>)> {
    let (ns, nw) = (targets.n_strong(), targets.n_weak());
    let batch = g.shape(student.weak)[0];
    if ns + nw > batch {
        return Err(invalid(format!("{} labeled rows in a batch of {}", ns + nw, batch)));
    }
    let strong = match &targets.strong {
        Some(y) => {
            let p = g.narrow(student.strong, 0, 0, ns)?;
            Some(g.bce(p, y)?)
        }
        None => None,
    };
    let weak = match &targets.weak {
        Some(y) => {
            let p = g.narrow(student.weak, 0, ns, nw)?;
            Some(g.bce(p, y)?)
        }
        None => None,
    };
    Ok((strong, weak))
}

/// Mean squared gap between student and teacher, strong plus weak, over all
/// rows. Teacher outputs enter as constants. With [`StopGrad::Student`]
/// the student side is detached as well, so the term carries no gradient.
pub fn consistency_loss(g: &mut Graph, student: &Predictions, teacher_strong: &Tensor, teacher_weak: &Tensor, stop: StopGrad) -> Result<Var> {
    let (ss, sw) = match stop {
        StopGrad::Teacher => (student.strong, student.weak),
        StopGrad::Student => {
            let s = g.value(student.strong).clone();
            let w = g.value(student.weak).clone();
            (g.constant(s), g.constant(w))
        }
    };
    let ts = g.constant(teacher_strong.clone());
    let tw = g.constant(teacher_weak.clone());
    let a = g.mse(ts, ss)?;
    let b = g.mse(tw, sw)?;
    Ok(g.add(a, b)?)
}

/// `strong + w_weak · weak + w_cons · consistency`.
#[allow(clippy::too_many_arguments)]
pub fn total_loss(
    g: &mut Graph,
    student: &Predictions,
    teacher_strong: &Tensor,
    teacher_weak: &Tensor,
    targets: &BatchTargets,
    w_weak: f64,
    w_cons: f64,
    stop: StopGrad,
) -> Result<LossVars> {
    let (strong, weak) = supervised_terms(g, student, targets)?;
    let consistency = consistency_loss(g, student, teacher_strong, teacher_weak, stop)?;
    let mut total = g.scale(consistency, w_cons);
    if let Some(w) = weak {
        let t = g.scale(w, w_weak);
        total = g.add(t, total)?;
    }
    if let Some(s) = strong {
        total = g.add(s, total)?;
    }
    Ok(LossVars {
        total,
        strong,
        weak,
        consistency,
    })
}

/// Consistency weight `w_max · exp(-5 (1 - min(epoch / ramp, 1))²)`.
pub fn consistency_ramp(epoch: f64, w_max: f64, ramp_epochs: usize) -> f64 {
    if ramp_epochs == 0 {
        return w_max;
    }
    let r = 1.0 - (epoch.max(0.0) / ramp_epochs as f64).min(1.0);
    w_max * (-5.0 * r * r).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn preds(g: &mut Graph, strong: Tensor, weak: Tensor) -> Predictions {
        Predictions {
            strong: g.leaf(strong),
            weak: g.leaf(weak),
        }
    }

    #[test]
    fn half_predictions_give_ln2() {
        let mut g = Graph::new();
        let p = preds(&mut g, Tensor::full(&[3, 2, 4], 0.5), Tensor::full(&[3, 2], 0.5));
        let t = BatchTargets {
            strong: Some(Tensor::from_fn(&[1, 2, 4], |i| (i[2] % 2) as f64)),
            weak: Some(Tensor::from_fn(&[1, 2], |i| i[1] as f64)),
        };
        let (s, w) = supervised_terms(&mut g, &p, &t).unwrap();
        let ln2 = std::f64::consts::LN_2;
        assert!((g.value(s.unwrap()).item() - ln2).abs() < 1e-15);
        assert!((g.value(w.unwrap()).item() - ln2).abs() < 1e-15);
    }

    #[test]
    fn constant_gap_gives_squared_gap() {
        let mut g = Graph::new();
        let p = preds(&mut g, Tensor::full(&[2, 2, 3], 0.3), Tensor::full(&[2, 2], 0.3));
        let c = consistency_loss(&mut g, &p, &Tensor::full(&[2, 2, 3], 0.5), &Tensor::full(&[2, 2], 0.3), StopGrad::Teacher).unwrap();
        assert!((g.value(c).item() - 0.04).abs() < 1e-15);
    }

    #[test]
    fn stop_gradient_on_student_removes_gradient() {
        let mut g = Graph::new();
        let p = preds(&mut g, Tensor::full(&[1, 1, 2], 0.3), Tensor::full(&[1, 1], 0.3));
        let c = consistency_loss(&mut g, &p, &Tensor::full(&[1, 1, 2], 0.5), &Tensor::full(&[1, 1], 0.5), StopGrad::Student).unwrap();
        assert!(!g.requires_grad(c));
    }

    #[test]
    fn ramp_endpoints() {
        assert_eq!(consistency_ramp(50.0, 2.0, 50), 2.0);
        assert_eq!(consistency_ramp(80.0, 2.0, 50), 2.0);
        assert!((consistency_ramp(0.0, 2.0, 50) - 2.0 * (-5f64).exp()).abs() < 1e-15);
    }
}
