//! Points of the unit simplex and the information-theoretic quantities
//! defined on them.
//!
//! All logarithms are natural. The convention `0 * log(0 / x) = 0` is used
//! throughout, and an infinite relative entropy is carried as an explicit
//! [`EntropyValue::Infinite`] rather than a large float.

use std::fmt;
use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sums within this distance of one are renormalized on construction.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-9;
/// Sums this close to one are kept as given, so declared weights survive
/// construction bit for bit.
pub const SUM_TOLERANCE: f64 = 1e-12;

/// A probability vector: nonnegative coordinates summing to one.
///
/// Used both for portfolio weights and for market weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct SimplexVector(Vec<f64>);

impl SimplexVector {
    /// Validates `weights`. Sums within [`SUM_TOLERANCE`] of one are kept;
    /// sums within [`RENORMALIZE_TOLERANCE`] are renormalized.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidParameter(
                "a simplex vector needs at least one coordinate".into(),
            ));
        }
        for (index, &value) in weights.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::InvalidWeight { index, value });
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > RENORMALIZE_TOLERANCE {
            return Err(Error::NotOnSimplex { sum });
        }
        if (sum - 1.0).abs() <= SUM_TOLERANCE {
            return Ok(Self(weights));
        }
        Ok(Self(weights.into_iter().map(|w| w / sum).collect()))
    }

    /// Normalizes an arbitrary nonnegative vector with a positive total
    /// (for example capitalizations) onto the simplex.
    pub fn from_positive(values: &[f64]) -> Result<Self> {
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::InvalidWeight { index, value });
            }
        }
        let total: f64 = values.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Data(format!("cannot normalize a vector with total {total}")));
        }
        Self::new(values.iter().map(|v| v / total).collect())
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("uniform vector of length 0".into()));
        }
        Ok(Self(vec![1.0 / n as f64; n]))
    }

    /// The corner `e_i` of the simplex.
    pub fn vertex(n: usize, i: usize) -> Result<Self> {
        if i >= n {
            return Err(Error::InvalidParameter(format!("vertex {i} out of range for n={n}")));
        }
        let mut w = vec![0.0; n];
        w[i] = 1.0;
        Ok(Self(w))
    }

    /// Convex combination `(1 - s) * self + s * other`, `s` in `[0, 1]`.
    pub fn mix(&self, other: &SimplexVector, s: f64) -> Result<Self> {
        check_same_len(self, other)?;
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::InvalidParameter(format!("mixing fraction {s} outside [0, 1]")));
        }
        Self::new(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| ((1.0 - s) * a + s * b).max(0.0))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.0.iter().all(|&w| w > 0.0)
    }

    /// L1 distance to another point.
    pub fn l1_distance(&self, other: &SimplexVector) -> Result<f64> {
        check_same_len(self, other)?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).sum())
    }
}

impl<'de> Deserialize<'de> for SimplexVector {
    fn deserialize<D>(deserializer: D) -> std::result::Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        let raw = Vec::<f64>::deserialize(deserializer)?;
        SimplexVector::new(raw).map_err(serde::de::Error::custom)
    }
}

impl Index<usize> for SimplexVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl AsRef<[f64]> for SimplexVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl fmt::Display for SimplexVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, w) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{w}")?;
        }
        write!(f, ")")
    }
}

pub(crate) fn check_same_len(a: &SimplexVector, b: &SimplexVector) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(())
}

/// A relative entropy: a nonnegative real, or infinity when absolute
/// continuity fails. `asset` records the first coordinate that broke it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EntropyValue {
    Finite(f64),
    Infinite { asset: usize },
}

impl EntropyValue {
    pub fn is_finite(self) -> bool {
        matches!(self, EntropyValue::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            EntropyValue::Finite(v) => Some(v),
            EntropyValue::Infinite { .. } => None,
        }
    }

    /// The value as an `f64`, with `f64::INFINITY` for the infinite case.
    pub fn to_f64(self) -> f64 {
        match self {
            EntropyValue::Finite(v) => v,
            EntropyValue::Infinite { .. } => f64::INFINITY,
        }
    }
}

impl fmt::Display for EntropyValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntropyValue::Finite(v) => write!(f, "{v}"),
            EntropyValue::Infinite { .. } => write!(f, "inf"),
        }
    }
}

/// Kullback-Leibler divergence `H(nu | mu) = sum nu_i log(nu_i / mu_i)`.
pub fn relative_entropy(nu: &SimplexVector, mu: &SimplexVector) -> Result<EntropyValue> {
    check_same_len(nu, mu)?;
    let mut total = 0.0;
    for (i, (&n, &m)) in nu.iter().zip(mu.iter()).enumerate() {
        if n == 0.0 {
            continue;
        }
        if m == 0.0 {
            return Ok(EntropyValue::Infinite { asset: i });
        }
        total += n * (n / m).ln();
    }
    Ok(EntropyValue::Finite(total.max(0.0)))
}

/// Shannon entropy `-sum pi_i log pi_i`, in `[0, log n]`.
pub fn shannon_entropy(pi: &SimplexVector) -> f64 {
    let h: f64 = pi.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum();
    h.max(0.0)
}

/// The geometric-mean function `prod mu_i^{pi_i}` that generates the
/// constant-weighted portfolio `pi`.
pub fn generating_function_value(pi: &SimplexVector, mu: &SimplexVector) -> Result<f64> {
    check_same_len(pi, mu)?;
    if let Some(asset) = mu.iter().position(|&m| m <= 0.0) {
        return Err(Error::ZeroMarketWeight { asset });
    }
    let log_value: f64 = pi
        .iter()
        .zip(mu.iter())
        .filter(|(&p, _)| p > 0.0)
        .map(|(&p, &m)| p * m.ln())
        .sum();
    Ok(log_value.exp())
}
