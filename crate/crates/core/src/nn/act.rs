use alloc::vec::Vec;

use crate::tensor::Tensor;
use crate::Scalar;

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// Rectifier with a cached activation mask for the backward pass.
#[derive(Debug, Clone)]
pub struct Relu {
    mask: Option<Vec<bool>>,
}

impl Relu {
    pub fn new() -> Self {
        Relu { mask: None }
    }

    pub fn forward<T: Scalar>(&mut self, x: &Tensor<T>, train: bool) -> Tensor<T> {
        if train {
            self.mask = Some(x.data().iter().map(|&v| v > T::zero()).collect());
        }
        x.map(|v| if v > T::zero() { v } else { T::zero() })
    }

    pub fn backward<T: Scalar>(&mut self, grad_out: &Tensor<T>) -> Tensor<T> {
        let mask = self.mask.take().expect("relu backward without cached forward");
        assert_eq!(mask.len(), grad_out.data().len(), "relu grad shape mismatch");
        let (n, c, h, w) = grad_out.shape();
        let data = grad_out
            .data()
            .iter()
            .zip(mask.iter())
            .map(|(&g, &on)| if on { g } else { T::zero() })
            .collect();
        Tensor::from_vec(n, c, h, w, data).expect("same length as grad")
    }
}

impl Default for Relu {
    fn default() -> Self {
        Relu::new()
    }
}
