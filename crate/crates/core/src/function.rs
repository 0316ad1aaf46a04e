//! Extended-real functions and measures on grid nodes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{MarkovGrid, NodeSet};

/// A function on grid nodes with values in `(-inf, +inf]`. NaN is rejected
/// at construction; `+inf` is allowed and left to each operation to accept
/// or refuse.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct GridFunction {
    values: Vec<f64>,
}

impl TryFrom<Vec<f64>> for GridFunction {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<GridFunction> for Vec<f64> {
    fn from(f: GridFunction) -> Self {
        f.values
    }
}

impl GridFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(node) = values.iter().position(|v| v.is_nan()) {
            return Err(Error::NotANumber { node });
        }
        Ok(Self { values })
    }

    pub fn zeros(n: usize) -> Self {
        Self::constant(n, 0.0)
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self { values: vec![c; n] }
    }

    /// `height` at the listed nodes, zero elsewhere.
    pub fn indicator(set: &NodeSet, height: f64) -> Self {
        Self {
            values: set.mask().iter().map(|&m| if m { height } else { 0.0 }).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn check_len(&self, grid: &MarkovGrid) -> Result<()> {
        if self.len() == grid.n() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: grid.n(),
                found: self.len(),
            })
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(node) => Err(Error::InfiniteValue { node }),
            None => Ok(()),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Sup-norm distance; equal infinite entries count as zero distance.
    pub fn distance(&self, other: &GridFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| if a == b { 0.0 } else { (a - b).abs() })
            .fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        Self {
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> GridFunction {
        assert_eq!(self.len(), other.len(), "grid functions of different length");
        Self {
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// Pointwise maximum, written `u ∨ v`.
    pub fn vee(&self, other: &GridFunction) -> GridFunction {
        self.zip_with(other, f64::max)
    }

    /// Pointwise minimum, written `u ∧ v`.
    pub fn wedge(&self, other: &GridFunction) -> GridFunction {
        self.zip_with(other, f64::min)
    }

    pub fn add(&self, other: &GridFunction) -> GridFunction {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &GridFunction) -> GridFunction {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> GridFunction {
        self.map(|v| c * v)
    }

    pub fn positive_part(&self) -> GridFunction {
        self.map(|v| v.max(0.0))
    }

    /// `self · 1_set`.
    pub fn restrict(&self, set: &NodeSet) -> GridFunction {
        Self {
            values: self
                .values
                .iter()
                .enumerate()
                .map(|(i, &v)| if set.contains(i) { v } else { 0.0 })
                .collect(),
        }
    }

    /// `self ≤ other + tol` at every node.
    pub fn le_within(&self, other: &GridFunction, tol: f64) -> bool {
        self.values.iter().zip(&other.values).all(|(&a, &b)| a <= b + tol)
    }
}

impl std::ops::Index<usize> for GridFunction {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

/// A nonnegative finite measure on grid nodes, stored densely.
#[derive(Clone, Debug, PartialEq)]
pub struct Measure {
    weights: Vec<f64>,
}

impl Measure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        for (node, &w) in weights.iter().enumerate() {
            if w.is_nan() {
                return Err(Error::NotANumber { node });
            }
            if !w.is_finite() {
                return Err(Error::InfiniteValue { node });
            }
            if w < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "measure has negative weight {w} at node {node}"
                )));
            }
        }
        Ok(Self { weights })
    }

    /// Clamps round-off negatives (down to `-tol`) to zero.
    pub(crate) fn from_computed(mut weights: Vec<f64>, tol: f64) -> Self {
        for w in &mut weights {
            if *w < 0.0 && *w >= -tol {
                *w = 0.0;
            }
            if w.abs() < 1e-300 {
                *w = 0.0;
            }
        }
        debug_assert!(weights.iter().all(|&w| w >= 0.0));
        Self { weights }
    }

    pub fn dirac(n: usize, x: usize) -> Self {
        let mut weights = vec![0.0; n];
        weights[x] = 1.0;
        Self { weights }
    }

    pub fn zero(n: usize) -> Self {
        Self { weights: vec![0.0; n] }
    }

    pub fn from_support(n: usize, support: &[(usize, f64)]) -> Result<Self> {
        let mut weights = vec![0.0; n];
        for &(i, w) in support {
            if i >= n {
                return Err(Error::NodeOutOfRange { node: i, n });
            }
            weights[i] += w;
        }
        Self::new(weights)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn support(&self) -> Vec<(usize, f64)> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w != 0.0)
            .map(|(i, &w)| (i, w))
            .collect()
    }

    /// `∫ f dμ` with the convention `0 · ∞ = 0`.
    pub fn integrate(&self, f: &GridFunction) -> f64 {
        self.weights
            .iter()
            .zip(f.values())
            .filter(|(&w, _)| w != 0.0)
            .map(|(&w, &v)| w * v)
            .sum()
    }

    pub fn scale(&self, c: f64) -> Measure {
        assert!(c >= 0.0, "measures scale by nonnegative factors");
        Measure {
            weights: self.weights.iter().map(|w| c * w).collect(),
        }
    }

    /// `t·self + (1−t)·other` for `t ∈ [0, 1]`.
    pub fn convex_combination(&self, other: &Measure, t: f64) -> Measure {
        assert!((0.0..=1.0).contains(&t));
        Measure {
            weights: self
                .weights
                .iter()
                .zip(&other.weights)
                .map(|(a, b)| t * a + (1.0 - t) * b)
                .collect(),
        }
    }

    pub fn distance(&self, other: &Measure) -> f64 {
        self.weights
            .iter()
            .zip(&other.weights)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}
