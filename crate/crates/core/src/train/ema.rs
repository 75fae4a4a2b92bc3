//! Exponential moving average of student weights into the teacher.

use sed_tensor::ParamStore;

use crate::error::{invalid, Result};

/// `teacher ← decay · teacher + (1 - decay) · student` for every trainable
/// entry. Buffers are left to the teacher's own forward passes. Both stores
/// must list the same names in the same order.
pub fn ema_update(teacher: &mut ParamStore, student: &ParamStore, decay: f64) -> Result<()> {
    if teacher.len() != student.len() {
        return Err(invalid(format!("teacher has {} entries, student {}", teacher.len(), student.len())));
    }
    let ids: Vec<_> = teacher.iter().map(|(id, _)| id).collect();
    for (tid, (_, s)) in ids.into_iter().zip(student.iter()) {
        let t = teacher.get(tid);
        if t.name != s.name || t.trainable != s.trainable || t.value.shape() != s.value.shape() {
            return Err(invalid(format!("teacher entry `{}` does not match student `{}`", t.name, s.name)));
        }
        if !s.trainable {
            continue;
        }
        for (a, &b) in teacher.tensor_mut(tid).data_mut().iter_mut().zip(s.value.data()) {
            *a = decay * *a + (1.0 - decay) * b;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use sed_tensor::Tensor;

    fn store(v: f64, buf: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", Tensor::full(&[2], v)).unwrap();
        s.add_buffer("bn.running_mean", Tensor::full(&[1], buf)).unwrap();
        s
    }

    #[test]
    fn decay_limits() {
        let mut t = store(1.0, 5.0);
        ema_update(&mut t, &store(3.0, 7.0), 0.0).unwrap();
        assert_eq!(t.tensor(t.id("w").unwrap()).data(), &[3.0, 3.0]);
        assert_eq!(t.tensor(t.id("bn.running_mean").unwrap()).data(), &[5.0]);
        ema_update(&mut t, &store(9.0, 7.0), 1.0).unwrap();
        assert_eq!(t.tensor(t.id("w").unwrap()).data(), &[3.0, 3.0]);
    }

    #[test]
    fn name_mismatch_is_rejected() {
        let mut t = store(1.0, 0.0);
        let mut s = ParamStore::new();
        s.add("v", Tensor::full(&[2], 1.0)).unwrap();
        s.add_buffer("bn.running_mean", Tensor::full(&[1], 0.0)).unwrap();
        assert!(ema_update(&mut t, &s, 0.5).is_err());
    }
}
