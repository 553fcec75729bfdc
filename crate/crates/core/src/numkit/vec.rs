use std::ops::Index;

use crate::error::{Error, Result};

/// Dense vector of `f64`, used for models, deltas and buffers alike.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DenseVec(Vec<f64>);

impl DenseVec {
    pub fn zeros(dim: usize) -> Self {
        DenseVec(vec![0.0; dim])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        DenseVec(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    fn check_dim(&self, other: &DenseVec) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        Ok(())
    }

    /// `y + alpha * x`, leaving both operands untouched.
    pub fn axpy(alpha: f64, x: &DenseVec, y: &DenseVec) -> Result<DenseVec> {
        let mut out = y.clone();
        out.add_scaled(alpha, x)?;
        Ok(out)
    }

    /// `self += alpha * x`.
    pub fn add_scaled(&mut self, alpha: f64, x: &DenseVec) -> Result<()> {
        self.check_dim(x)?;
        for (a, b) in self.0.iter_mut().zip(&x.0) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        for v in &mut self.0 {
            *v *= alpha;
        }
    }

    pub fn scaled(&self, alpha: f64) -> DenseVec {
        let mut out = self.clone();
        out.scale(alpha);
        out
    }

    /// `self - other`.
    pub fn sub(&self, other: &DenseVec) -> Result<DenseVec> {
        DenseVec::axpy(-1.0, other, self)
    }

    pub fn dot(&self, other: &DenseVec) -> Result<f64> {
        self.check_dim(other)?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn fill_zero(&mut self) {
        self.0.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Largest per-coordinate absolute difference.
    pub fn max_abs_diff(&self, other: &DenseVec) -> Result<f64> {
        self.check_dim(other)?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

impl Index<usize> for DenseVec {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<Vec<f64>> for DenseVec {
    fn from(v: Vec<f64>) -> Self {
        DenseVec(v)
    }
}
