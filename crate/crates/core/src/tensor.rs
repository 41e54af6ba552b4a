//! Dense row-major tensors of 32-bit reals.
//!
//! Tensors are immutable values for most of the crate: operations return new
//! tensors rather than mutating in place. Reductions accumulate in f64 to
//! keep long sums stable; storage stays f32 throughout.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    /// Builds a tensor, checking that the shape accounts for every element.
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Dimension(format!(
                "zero-sized dimension in shape {shape:?}"
            )));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Dimension(format!(
                "shape {shape:?} implies {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn full(shape: Vec<usize>, value: f32) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape,
            data: vec![value; n],
        }
    }

    /// 1-D tensor from a slice.
    pub fn from_slice(values: &[f32]) -> Self {
        Self {
            shape: vec![values.len()],
            data: values.to_vec(),
        }
    }

    pub fn scalar(value: f32) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Same data under a new shape with equal element count.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::Dimension(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        Ok(Self {
            shape,
            data: self.data.clone(),
        })
    }

    /// Elementwise combination of two same-shape tensors.
    pub fn map_zip(&self, other: &Tensor, op: impl Fn(f32, f32) -> f32) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::Dimension(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| op(a, b))
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn map(&self, op: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&a| op(a)).collect(),
        }
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.map_zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.map_zip(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.map_zip(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f32) -> Tensor {
        self.map(|a| a * s)
    }

    /// Sum with f64 accumulation.
    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    /// Population variance with f64 accumulation.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.data
            .iter()
            .map(|&v| {
                let d = v as f64 - m;
                d * d
            })
            .sum::<f64>()
            / self.data.len() as f64
    }

    pub fn min(&self) -> f32 {
        self.data.iter().copied().fold(f32::INFINITY, f32::min)
    }

    pub fn max(&self) -> f32 {
        self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    /// Euclidean norm with f64 accumulation.
    pub fn norm(&self) -> f64 {
        self.data
            .iter()
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt()
    }

    /// Squared distance to another tensor, f64 accumulation.
    pub fn distance_sq(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::Dimension(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| {
                let d = a as f64 - b as f64;
                d * d
            })
            .sum())
    }

    /// Largest absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::Dimension(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a as f64 - b as f64).abs())
            .fold(0.0, f64::max))
    }

    /// Errors if any element is NaN or infinite.
    pub fn validate_finite(&self, context: &str) -> Result<()> {
        if let Some(idx) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "{context}: non-finite value {} at flat index {idx}",
                self.data[idx]
            )));
        }
        Ok(())
    }
}

/// Elementwise binary operation over two same-shape tensors.
pub fn tensor_map_zip(a: &Tensor, b: &Tensor, op: impl Fn(f32, f32) -> f32) -> Result<Tensor> {
    a.map_zip(b, op)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_zip_add_sub_mul() {
        let a = Tensor::from_slice(&[1.0, 2.0]);
        let b = Tensor::from_slice(&[3.0, 4.0]);
        assert_eq!(tensor_map_zip(&a, &b, |x, y| x + y).unwrap().data(), &[4.0, 6.0]);
        assert_eq!(a.sub(&a).unwrap().data(), &[0.0, 0.0]);
        let c = Tensor::from_slice(&[2.0]);
        let d = Tensor::from_slice(&[0.5]);
        assert_eq!(c.mul(&d).unwrap().data(), &[1.0]);
    }

    #[test]
    fn map_zip_shape_mismatch() {
        let a = Tensor::from_slice(&[1.0, 2.0]);
        let b = Tensor::from_slice(&[1.0, 2.0, 3.0]);
        assert!(matches!(a.add(&b), Err(Error::Dimension(_))));
    }

    #[test]
    fn construction_checks_element_count() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2, 0], vec![]).is_err());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn reductions_use_f64_accumulation() {
        // 1e8 + many tiny values loses everything in f32 partial sums.
        let mut data = vec![1e-3f32; 4096];
        data[0] = 1.0e8;
        let t = Tensor::new(vec![4096], data).unwrap();
        let expected = 1.0e8 + 4095.0 * 1.0e-3;
        assert!((t.sum() - expected).abs() < 1.0);
    }

    #[test]
    fn validate_finite_reports_index() {
        let mut t = Tensor::zeros(vec![4]);
        t.data_mut()[2] = f32::NAN;
        let err = t.validate_finite("test").unwrap_err();
        assert!(err.to_string().contains("index 2"));
    }
}
