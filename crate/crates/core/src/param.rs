use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

/// Flat coordinate vector of a landscape or model.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(coords: Vec<f64>) -> Self {
        Self(coords)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        dot(&self.0, other)
    }

    pub fn norm(&self) -> f64 {
        self.dot(&self.0).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0.iter().map(|x| x * s).collect())
    }

    /// `self + s * other`
    pub fn add_scaled(&self, s: f64, other: &[f64]) -> Self {
        debug_assert_eq!(self.len(), other.len());
        Self(self.0.iter().zip(other).map(|(a, b)| a + s * b).collect())
    }

    pub fn axpy_in_place(&mut self, s: f64, other: &[f64]) {
        for (a, b) in self.0.iter_mut().zip(other) {
            *a += s * b;
        }
    }
}

impl Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl From<&[f64]> for ParamVector {
    fn from(v: &[f64]) -> Self {
        Self(v.to_vec())
    }
}

impl<const N: usize> From<[f64; N]> for ParamVector {
    fn from(v: [f64; N]) -> Self {
        Self(v.to_vec())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
