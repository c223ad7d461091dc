//! Dense real vector, the carrier for upper variables, lower variables, and
//! inner-trajectory initializations.
//!
//! Entries are always finite; the checked constructors reject NaN and infinity
//! so that non-finite values surface at operation boundaries instead of
//! propagating silently.

use std::ops::{Add, Index, Mul, Neg, Sub};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Vector {
    values: Vec<f64>,
}

impl Vector {
    /// Checked constructor: every entry must be finite.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite entry {} at index {bad}",
                values[bad]
            )));
        }
        Ok(Self { values })
    }

    /// Panicking constructor for literals; asserts finiteness.
    pub fn from_slice(values: &[f64]) -> Self {
        Self::new(values.to_vec()).expect("from_slice requires finite entries")
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            values: vec![0.0; dim],
        }
    }

    pub fn ones(dim: usize) -> Self {
        Self {
            values: vec![1.0; dim],
        }
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize) -> f64) -> Self {
        Self {
            values: (0..dim).map(f).collect(),
        }
    }

    /// Internal constructor for values produced by arithmetic on finite inputs.
    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.values.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn scale(&self, s: f64) -> Vector {
        Vector::from_raw(self.values.iter().map(|v| v * s).collect())
    }

    /// self + s * other
    pub fn axpy(&self, s: f64, other: &Vector) -> Vector {
        debug_assert_eq!(self.dim(), other.dim());
        Vector::from_raw(
            self.values
                .iter()
                .zip(other.values.iter())
                .map(|(a, b)| a + s * b)
                .collect(),
        )
    }

    /// Coordinate-wise product; used to apply projection masks.
    pub fn hadamard(&self, other: &Vector) -> Vector {
        debug_assert_eq!(self.dim(), other.dim());
        Vector::from_raw(
            self.values
                .iter()
                .zip(other.values.iter())
                .map(|(a, b)| a * b)
                .collect(),
        )
    }

    pub fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: self.dim(),
            });
        }
        Ok(())
    }

    /// First and second halves of an even-dimensional vector.
    pub(crate) fn split_halves(&self) -> (&[f64], &[f64]) {
        let half = self.dim() / 2;
        self.values.split_at(half)
    }

    pub(crate) fn concat(a: &[f64], b: &[f64]) -> Vector {
        let mut values = Vec::with_capacity(a.len() + b.len());
        values.extend_from_slice(a);
        values.extend_from_slice(b);
        Vector::from_raw(values)
    }
}

impl Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

impl Add for &Vector {
    type Output = Vector;
    fn add(self, rhs: &Vector) -> Vector {
        self.axpy(1.0, rhs)
    }
}

impl Sub for &Vector {
    type Output = Vector;
    fn sub(self, rhs: &Vector) -> Vector {
        self.axpy(-1.0, rhs)
    }
}

impl Mul<f64> for &Vector {
    type Output = Vector;
    fn mul(self, s: f64) -> Vector {
        self.scale(s)
    }
}

impl Neg for &Vector {
    type Output = Vector;
    fn neg(self) -> Vector {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        assert!(Vector::new(vec![1.0, f64::NAN]).is_err());
        assert!(Vector::new(vec![f64::INFINITY]).is_err());
        assert!(Vector::new(vec![1.0, -2.0]).is_ok());
    }

    #[test]
    fn norm_and_dot() {
        let v = Vector::from_slice(&[3.0, 4.0]);
        assert_eq!(v.norm(), 5.0);
        let w = Vector::from_slice(&[1.0, -1.0]);
        assert_eq!(v.dot(&w), -1.0);
    }

    #[test]
    fn axpy_matches_manual() {
        let v = Vector::from_slice(&[1.0, 2.0]);
        let w = Vector::from_slice(&[10.0, -10.0]);
        let r = v.axpy(0.5, &w);
        assert_eq!(r.as_slice(), &[6.0, -3.0]);
    }
}
