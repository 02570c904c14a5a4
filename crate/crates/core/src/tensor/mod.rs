//! Minimal dense-tensor automatic differentiation for small convolutional
//! networks, in 64-bit arithmetic throughout.
//!
//! The engine is layer-based rather than graph-based: a [`Network`] owns an
//! ordered layer list, `forward` caches what `backward` needs, and
//! `backward` walks the layers in exact reverse order, accumulating
//! parameter gradients and returning the input gradient so that losses can
//! flow across chained networks. [`gradient_check`] verifies any objective
//! against central finite differences.

mod gradcheck;
mod layer;
mod network;
mod optim;

pub use gradcheck::{gradient_check, NetworkGroup, ParamSpace};
pub use layer::{ActKind, Activation, Conv2d, InstanceNorm, Layer, Padding, Residual, Upsample2x};
pub use network::{load_checkpoint, save_checkpoint, Network};
pub use optim::Adam;

use crate::error::{Error, Result};

/// Dense row-major f64 tensor. Feature maps use NCHW order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if data.len() != n {
            return Err(Error::ShapeMismatch {
                expected: shape.to_vec(),
                got: vec![data.len()],
            });
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![value; n] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NumericFault(format!("non-finite value after {context}")))
        }
    }

    pub fn same_shape(&self, other: &Tensor) -> Result<()> {
        if self.shape == other.shape {
            Ok(())
        } else {
            Err(Error::ShapeMismatch { expected: self.shape.clone(), got: other.shape.clone() })
        }
    }
}

/// A trainable tensor: value, accumulated gradient, and the optimizer's
/// moment buffers, all shape-locked together.
#[derive(Debug, Clone)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
    pub moment1: Tensor,
    pub moment2: Tensor,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let shape = value.shape().to_vec();
        Self {
            value,
            grad: Tensor::zeros(&shape),
            moment1: Tensor::zeros(&shape),
            moment2: Tensor::zeros(&shape),
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().fill(0.0);
    }
}

#[cfg(test)]
mod tensor_type_tests {
    use super::*;

    #[test]
    fn from_vec_validates_length() {
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 6]).is_ok());
        assert!(matches!(
            Tensor::from_vec(&[2, 3], vec![0.0; 5]),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn ensure_finite_catches_nan_and_inf() {
        let t = Tensor::from_vec(&[2], vec![1.0, f64::NAN]).unwrap();
        assert!(matches!(t.ensure_finite("test"), Err(Error::NumericFault(_))));
        let t = Tensor::from_vec(&[2], vec![1.0, f64::INFINITY]).unwrap();
        assert!(t.ensure_finite("test").is_err());
    }

    #[test]
    fn param_buffers_share_shape() {
        let p = Param::new(Tensor::zeros(&[3, 4]));
        assert_eq!(p.grad.shape(), &[3, 4]);
        assert_eq!(p.moment1.shape(), &[3, 4]);
        assert_eq!(p.moment2.shape(), &[3, 4]);
    }
}
