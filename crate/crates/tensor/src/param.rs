use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A named tensor owned by a [`ParamStore`]. Non-trainable entries hold
/// buffers such as batch-norm running statistics.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Arc<Tensor>,
    pub trainable: bool,
}

/// Ordered collection of named parameters.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
    index: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn insert(&mut self, name: &str, value: Tensor, trainable: bool) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(TensorError::Param(format!("duplicate parameter name `{}`", name)));
        }
        let id = ParamId(self.params.len());
        self.params.push(Parameter {
            name: name.to_string(),
            value: Arc::new(value),
            trainable,
        });
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        self.insert(name, value, true)
    }

    pub fn add_buffer(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        self.insert(name, value, false)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    /// Mutable access; copies the data first if a graph still shares it.
    pub fn tensor_mut(&mut self, id: ParamId) -> &mut Tensor {
        Arc::make_mut(&mut self.params[id.0].value)
    }

    pub fn set(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        let p = &mut self.params[id.0];
        if p.value.shape() != value.shape() {
            return Err(TensorError::Param(format!(
                "`{}` has shape {:?}, got {:?}",
                p.name,
                p.value.shape(),
                value.shape()
            )));
        }
        p.value = Arc::new(value);
        Ok(())
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Number of trainable scalars.
    pub fn count_trainable(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.value.numel()).sum()
    }
}

/// Uniform init in `±1/sqrt(fan_in)`, the default for convolution and
/// linear layers.
pub fn fan_in_uniform<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor {
    Tensor::uniform(shape, 1.0 / (fan_in.max(1) as f64).sqrt(), rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn duplicate_names_are_rejected() {
        let mut s = ParamStore::new();
        s.add("w", Tensor::zeros(&[2])).unwrap();
        assert!(s.add("w", Tensor::zeros(&[2])).is_err());
        assert!(s.add_buffer("w", Tensor::zeros(&[2])).is_err());
    }

    #[test]
    fn buffers_do_not_count() {
        let mut s = ParamStore::new();
        s.add("w", Tensor::zeros(&[3, 4])).unwrap();
        s.add_buffer("running_mean", Tensor::zeros(&[4])).unwrap();
        assert_eq!(s.count_trainable(), 12);
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn mutation_does_not_affect_shared_snapshot() {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::full(&[2], 1.0)).unwrap();
        let snapshot = Arc::clone(&s.get(id).value);
        s.tensor_mut(id).data_mut()[0] = 5.0;
        assert_eq!(snapshot.data(), &[1.0, 1.0]);
        assert_eq!(s.tensor(id).data(), &[5.0, 1.0]);
    }

    #[test]
    fn fan_in_bound_holds() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let t = fan_in_uniform(&[64, 16], 16, &mut rng);
        assert!(t.max_abs() <= 0.25);
    }
}
