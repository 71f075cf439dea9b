//! Named parameter storage shared by the networks and the optimizer.

use std::collections::HashMap;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Grads, Scalar, Tape, Var};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

pub struct ParamStore<T: Scalar> {
    values: Vec<Array2<T>>,
    names: Vec<String>,
    by_name: HashMap<String, usize>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { values: Vec::new(), names: Vec::new(), by_name: HashMap::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Array2<T>) -> ParamId {
        let name = name.into();
        assert!(!self.by_name.contains_key(&name), "duplicate parameter {name}");
        self.by_name.insert(name.clone(), self.values.len());
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    /// Gaussian init with the given std.
    pub fn add_normal(&mut self, name: impl Into<String>, shape: (usize, usize), std: f64, rng: &mut ChaCha8Rng) -> ParamId {
        let dist = rand_distr::Normal::new(0.0f64, std).expect("valid std");
        let mut a = Array2::zeros(shape);
        for v in a.iter_mut() {
            *v = T::from_f64(rng.sample(dist));
        }
        self.add(name, a)
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: (usize, usize)) -> ParamId {
        self.add(name, Array2::zeros(shape))
    }

    pub fn add_ones(&mut self, name: impl Into<String>, shape: (usize, usize)) -> ParamId {
        self.add(name, Array2::from_elem(shape, T::one()))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &Array2<T> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Array2<T> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<T>)> {
        self.names.iter().map(|s| s.as_str()).zip(self.values.iter())
    }

    pub fn total_elements(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Register every parameter as a tape leaf, in store order.
    pub fn bind(&self, tape: &mut Tape<T>) -> Bound {
        let vars = self.values.iter().map(|v| tape.leaf(v.clone())).collect();
        Bound { vars }
    }

    /// Register every parameter as a constant (inference mode: no gradients,
    /// no clone-backed leaf bookkeeping in backward).
    pub fn bind_frozen(&self, tape: &mut Tape<T>) -> Bound {
        let vars = self.values.iter().map(|v| tape.constant(v.clone())).collect();
        Bound { vars }
    }
}

/// Parameter vars registered on one tape.
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }
}

impl std::ops::Index<ParamId> for Bound {
    type Output = Var;
    fn index(&self, id: ParamId) -> &Var {
        &self.vars[id.0]
    }
}

/// Gradient accumulator aligned with a [`ParamStore`].
pub struct GradAccum<T: Scalar> {
    sums: Vec<Array2<T>>,
    examples: usize,
}

impl<T: Scalar> GradAccum<T> {
    pub fn zeros_like(store: &ParamStore<T>) -> Self {
        GradAccum {
            sums: store.values.iter().map(|v| Array2::zeros(v.dim())).collect(),
            examples: 0,
        }
    }

    /// Pull parameter gradients from one example's tape.
    pub fn add(&mut self, grads: &mut Grads<T>, bound: &Bound) {
        for (i, sum) in self.sums.iter_mut().enumerate() {
            if let Some(g) = grads.take(bound.vars[i]) {
                *sum += &g;
            }
        }
        self.examples += 1;
    }

    /// Merge another accumulator (fixed order reduction).
    pub fn merge(&mut self, other: GradAccum<T>) {
        for (a, b) in self.sums.iter_mut().zip(other.sums.into_iter()) {
            *a += &b;
        }
        self.examples += other.examples;
    }

    /// Divide by the number of accumulated examples.
    pub fn into_mean(mut self) -> Vec<Array2<T>> {
        let n = self.examples.max(1);
        let inv = T::from_f64(1.0 / n as f64);
        for s in self.sums.iter_mut() {
            s.mapv_inplace(|x| x * inv);
        }
        self.sums
    }

    pub fn examples(&self) -> usize {
        self.examples
    }
}
