//! Named parameter tensors and their gradient accumulators.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone)]
pub struct Param<F> {
    pub name: String,
    pub value: Array2<F>,
    /// Whether decoupled weight decay applies (weights yes; biases and norm gains no).
    pub decay: bool,
}

/// Gradient tensors aligned one-to-one with a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Gradients<F> {
    tensors: Vec<Array2<F>>,
}

impl<F: Scalar> Gradients<F> {
    pub fn zeros_like(store: &ParamStore<F>) -> Self {
        Self {
            tensors: store
                .params
                .iter()
                .map(|p| Array2::zeros(p.value.raw_dim()))
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Array2<F> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array2<F> {
        &mut self.tensors[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Array2<F>> {
        self.tensors.iter()
    }

    /// `self += other`.
    pub fn add_assign(&mut self, other: &Gradients<F>) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            *a += b;
        }
    }

    pub fn fill_zero(&mut self) {
        for t in &mut self.tensors {
            t.fill(F::zero());
        }
    }

    pub fn max_abs(&self) -> F {
        self.tensors
            .iter()
            .flat_map(|t| t.iter())
            .fold(F::zero(), |m, &v| m.max(v.abs()))
    }
}

/// Parameters plus the gradient accumulator that `backward` writes into.
#[derive(Debug, Clone)]
pub struct ParamStore<F> {
    params: Vec<Param<F>>,
    grads: Gradients<F>,
}

impl<F: Scalar> Default for ParamStore<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> ParamStore<F> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            grads: Gradients {
                tensors: Vec::new(),
            },
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Array2<F>, decay: bool) -> ParamId {
        let id = ParamId(self.params.len());
        self.grads.tensors.push(Array2::zeros(value.raw_dim()));
        self.params.push(Param {
            name: name.into(),
            value,
            decay,
        });
        id
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn param(&self, id: ParamId) -> &Param<F> {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Array2<F> {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Array2<F> {
        &mut self.params[id.0].value
    }

    pub fn params(&self) -> &[Param<F>] {
        &self.params
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn grads(&self) -> &Gradients<F> {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut Gradients<F> {
        &mut self.grads
    }

    pub fn grad(&self, id: ParamId) -> &Array2<F> {
        self.grads.get(id)
    }

    pub fn zero_grad(&mut self) {
        self.grads.fill_zero();
    }

    pub fn accumulate(&mut self, grads: &Gradients<F>) {
        self.grads.add_assign(grads);
    }

    /// Replaces every value with the matching tensor of `other`. Shapes must agree.
    pub fn copy_values_from(&mut self, other: &ParamStore<F>) -> Result<()> {
        if self.params.len() != other.params.len() {
            return Err(Error::Shape(format!(
                "{} parameters vs {}",
                self.params.len(),
                other.params.len()
            )));
        }
        for (dst, src) in self.params.iter_mut().zip(&other.params) {
            if dst.value.shape() != src.value.shape() || dst.name != src.name {
                return Err(Error::Shape(format!(
                    "{} {:?} vs {} {:?}",
                    dst.name,
                    dst.value.shape(),
                    src.name,
                    src.value.shape()
                )));
            }
            dst.value.assign(&src.value);
        }
        Ok(())
    }
}
