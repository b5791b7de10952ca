//! Real functions and measures on a finite state set.

use std::ops::{Deref, Index};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A real-valued function on the state set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Field(Vec<f64>);

impl Field {
    /// Wraps `values`, rejecting non-finite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!(
                "field entry {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(Field(values))
    }

    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Field(values)
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Field(vec![value; n])
    }

    pub fn zeros(n: usize) -> Self {
        Field(vec![0.0; n])
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize) -> f64) -> Self {
        Field((0..n).map(f).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field(self.0.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &[f64], f: impl Fn(f64, f64) -> f64) -> Field {
        debug_assert_eq!(self.len(), other.len());
        Field(self.0.iter().zip(other).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// True when all entries agree to `tol`.
    pub fn is_constant(&self, tol: f64) -> bool {
        self.max() - self.min() <= tol
    }

    /// `∫ self · other dm`.
    pub fn integrate_against(&self, other: &[f64], m: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(other)
            .zip(m)
            .map(|((a, b), w)| a * b * w)
            .sum()
    }

    /// `∫ self dm`.
    pub fn integrate(&self, m: &[f64]) -> f64 {
        self.0.iter().zip(m).map(|(a, w)| a * w).sum()
    }
}

impl Deref for Field {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for Field {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<Field> for Vec<f64> {
    fn from(f: Field) -> Self {
        f.0
    }
}

/// A finite nonnegative measure on the state set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measure {
    weights: Vec<f64>,
}

impl Measure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Invalid(format!(
                "measure weight {i} is negative or not finite ({})",
                weights[i]
            )));
        }
        Ok(Measure { weights })
    }

    pub(crate) fn from_raw(weights: Vec<f64>) -> Self {
        Measure { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Tolerance on the total mass of a probability measure.
pub const PROBABILITY_TOL: f64 = 1e-12;

/// A measure of total mass one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityMeasure(Measure);

impl ProbabilityMeasure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let m = Measure::new(weights)?;
        let total = m.total();
        if (total - 1.0).abs() > PROBABILITY_TOL {
            return Err(Error::Invalid(format!(
                "probability measure has total mass {total}"
            )));
        }
        Ok(ProbabilityMeasure(m))
    }

    /// Rescales a nonzero measure to unit mass.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        let m = Measure::new(weights)?;
        let total = m.total();
        if total <= 0.0 {
            return Err(Error::Invalid("cannot normalize a zero measure".into()));
        }
        Ok(ProbabilityMeasure(Measure::from_raw(
            m.weights.iter().map(|w| w / total).collect(),
        )))
    }

    pub fn dirac(n: usize, x: usize) -> Self {
        let mut w = vec![0.0; n];
        w[x] = 1.0;
        ProbabilityMeasure(Measure::from_raw(w))
    }

    pub fn uniform(n: usize) -> Self {
        ProbabilityMeasure(Measure::from_raw(vec![1.0 / n as f64; n]))
    }

    pub fn weights(&self) -> &[f64] {
        self.0.weights()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_measure(&self) -> &Measure {
        &self.0
    }
}
