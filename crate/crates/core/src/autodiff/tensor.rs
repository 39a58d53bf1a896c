use crate::error::{Error, Result};

/// Dense row-major array of `f64`.
///
/// Signals and activations are rank 2 (`channels × length`), convolution
/// kernels rank 3 (`out × in × width`), biases rank 1 and losses rank 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    values: Vec<f64>,
    shape: Vec<usize>,
}

impl Tensor {
    pub fn new(values: Vec<f64>, shape: Vec<usize>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if values.len() != expected {
            return Err(Error::shape(format!(
                "{} values do not fill shape {:?}",
                values.len(),
                shape
            )));
        }
        Ok(Tensor { values, shape })
    }

    /// A `channels × length` signal tensor.
    pub fn signal(channels: usize, length: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 || length == 0 {
            return Err(Error::shape(
                "signal tensors need positive channels and length",
            ));
        }
        Tensor::new(values, vec![channels, length])
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            values: vec![value],
            shape: Vec::new(),
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            values: vec![0.0; shape.iter().product()],
            shape: shape.to_vec(),
        }
    }

    pub(crate) fn from_parts(values: Vec<f64>, shape: Vec<usize>) -> Self {
        debug_assert_eq!(values.len(), shape.iter().product::<usize>());
        Tensor { values, shape }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.values.len() == 1 && self.shape.iter().all(|&d| d == 1)
    }

    /// Channel count of a rank-2 tensor.
    pub fn channels(&self) -> usize {
        debug_assert_eq!(self.rank(), 2);
        self.shape[0]
    }

    /// Sample count of a rank-2 tensor.
    pub fn length(&self) -> usize {
        debug_assert_eq!(self.rank(), 2);
        self.shape[1]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_value_count() {
        assert!(Tensor::new(vec![1.0, 2.0, 3.0], vec![2, 2]).is_err());
        let t = Tensor::signal(2, 3, vec![0.0; 6]).unwrap();
        assert_eq!((t.channels(), t.length(), t.len()), (2, 3, 6));
        assert!(Tensor::signal(0, 3, vec![]).is_err());
    }

    #[test]
    fn scalars() {
        let s = Tensor::scalar(2.5);
        assert!(s.is_scalar());
        assert_eq!(s.rank(), 0);
        assert!(Tensor::new(vec![1.0], vec![1, 1]).unwrap().is_scalar());
        assert!(!Tensor::zeros(&[2]).is_scalar());
    }
}
