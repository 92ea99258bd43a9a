//! Named trainable parameter: value plus accumulated gradient.

use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone)]
pub struct Parameter<E: Element> {
    pub name: String,
    pub value: Tensor<E>,
    pub grad: Tensor<E>,
}

impl<E: Element> Parameter<E> {
    pub fn new(name: impl Into<String>, value: Tensor<E>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Parameter { name: name.into(), value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().fill(E::zero());
    }

    /// Adds `delta` into the accumulated gradient. Panics on shape mismatch
    /// (caller bug, not a runtime condition).
    pub fn accumulate_grad(&mut self, delta: &Tensor<E>) {
        assert_eq!(self.grad.shape(), delta.shape(), "grad shape mismatch for {}", self.name);
        for (g, &d) in self.grad.data_mut().iter_mut().zip(delta.data()) {
            *g = *g + d;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grad_matches_value_shape_and_zeroes() {
        let mut p = Parameter::new("w", Tensor::filled(&[2, 3], 1.0f32));
        assert_eq!(p.value.shape(), p.grad.shape());
        p.accumulate_grad(&Tensor::filled(&[2, 3], 2.0));
        p.accumulate_grad(&Tensor::filled(&[2, 3], 0.5));
        assert!(p.grad.data().iter().all(|&g| g == 2.5));
        p.zero_grad();
        assert!(p.grad.data().iter().all(|&g| g == 0.0));
    }
}
