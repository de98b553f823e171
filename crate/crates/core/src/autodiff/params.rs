use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// A named trainable tensor and its gradient slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

/// Named parameters, iterated in lexicographic name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore<T> {
    params: BTreeMap<String, Param<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            params: BTreeMap::new(),
        }
    }

    /// Inserts or replaces a parameter; its gradient is reset to zero.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) {
        let grad = Tensor::zeros(value.shape());
        self.params.insert(name.into(), Param { value, grad });
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.get(name).map(|p| &p.value)
    }

    pub fn value(&self, name: &str) -> Result<&Tensor<T>> {
        self.get(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn value_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.params
            .get_mut(name)
            .map(|p| &mut p.value)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn grad(&self, name: &str) -> Result<&Tensor<T>> {
        self.params
            .get(name)
            .map(|p| &p.grad)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub(crate) fn grad_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.params
            .get_mut(name)
            .map(|p| &mut p.grad)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param<T>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param<T>)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar weights.
    pub fn num_scalars(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params.values_mut() {
            p.grad.data_mut().iter_mut().for_each(|g| *g = T::zero());
        }
    }

    /// Sets every parameter value to zero.
    pub fn zero_values(&mut self) {
        for p in self.params.values_mut() {
            p.value.data_mut().iter_mut().for_each(|g| *g = T::zero());
        }
    }

    /// Largest absolute difference between matching parameters, or `None`
    /// if the two stores do not hold the same names and shapes.
    pub fn max_abs_diff(&self, other: &Self) -> Option<T> {
        if self.params.len() != other.params.len() {
            return None;
        }
        let mut worst = T::zero();
        for ((na, a), (nb, b)) in self.params.iter().zip(&other.params) {
            if na != nb || a.value.shape() != b.value.shape() {
                return None;
            }
            worst = worst.max(a.value.max_abs_diff(&b.value));
        }
        Some(worst)
    }
}
