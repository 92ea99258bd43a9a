//! Parameterized layers: convolution and dense, with input caching for the
//! backward pass and fan-in-scaled normal init (std = sqrt(2/fan_in), zero
//! biases).

use crate::error::{Error, Result};
use crate::ops::{conv2d_backward, conv2d_forward, dense_backward, dense_forward, ConvSpec};
use crate::param::Parameter;
use crate::rng::RngState;
use crate::tensor::{Element, Tensor};

fn init_weights<E: Element>(shape: &[usize], fan_in: usize, rng: &mut RngState) -> Tensor<E> {
    let std = (2.0 / fan_in as f64).sqrt();
    let len: usize = shape.iter().product();
    let data = (0..len).map(|_| rng.normal_scaled::<E>(std)).collect();
    Tensor::from_vec(shape.to_vec(), data).expect("init shape")
}

#[derive(Debug, Clone)]
pub struct Conv2dLayer<E: Element> {
    pub spec: ConvSpec,
    pub weight: Parameter<E>,
    pub bias: Parameter<E>,
    cached_input: Option<Tensor<E>>,
}

impl<E: Element> Conv2dLayer<E> {
    pub fn new(spec: ConvSpec, name: &str, rng: &mut RngState) -> Self {
        let fan_in = spec.in_channels * spec.kernel * spec.kernel;
        let weight = Parameter::new(
            format!("{name}.weight"),
            init_weights(&spec.weight_shape(), fan_in, rng),
        );
        let bias = Parameter::new(format!("{name}.bias"), Tensor::zeros(&[spec.out_channels]));
        Conv2dLayer { spec, weight, bias, cached_input: None }
    }

    /// `train` controls whether the input is retained for backward.
    pub fn forward(&mut self, input: &Tensor<E>, train: bool) -> Result<Tensor<E>> {
        let out = conv2d_forward(input, &self.spec, &self.weight.value, &self.bias.value)?;
        if train {
            self.cached_input = Some(input.clone());
        }
        Ok(out)
    }

    /// Caching-free forward for inference.
    pub fn forward_ref(&self, input: &Tensor<E>) -> Result<Tensor<E>> {
        conv2d_forward(input, &self.spec, &self.weight.value, &self.bias.value)
    }

    /// Consumes the cached input, accumulates parameter gradients, and
    /// returns the input gradient.
    pub fn backward(&mut self, upstream_grad: &Tensor<E>) -> Result<Tensor<E>> {
        let input = self.cached_input.take().ok_or_else(|| {
            Error::InvalidArgument(format!(
                "{}: backward without a cached forward (train mode)",
                self.weight.name
            ))
        })?;
        let (dx, dw, db) = conv2d_backward(upstream_grad, &input, &self.spec, &self.weight.value)?;
        self.weight.accumulate_grad(&dw);
        self.bias.accumulate_grad(&db);
        Ok(dx)
    }
}

#[derive(Debug, Clone)]
pub struct DenseLayer<E: Element> {
    pub weight: Parameter<E>,
    pub bias: Parameter<E>,
    cached_input: Option<Tensor<E>>,
}

impl<E: Element> DenseLayer<E> {
    pub fn new(in_features: usize, out_features: usize, name: &str, rng: &mut RngState) -> Self {
        let weight = Parameter::new(
            format!("{name}.weight"),
            init_weights(&[in_features, out_features], in_features, rng),
        );
        let bias = Parameter::new(format!("{name}.bias"), Tensor::zeros(&[out_features]));
        DenseLayer { weight, bias, cached_input: None }
    }

    pub fn in_features(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn out_features(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn forward(&mut self, input: &Tensor<E>, train: bool) -> Result<Tensor<E>> {
        let out = dense_forward(input, &self.weight.value, &self.bias.value)?;
        if train {
            self.cached_input = Some(input.clone());
        }
        Ok(out)
    }

    pub fn forward_ref(&self, input: &Tensor<E>) -> Result<Tensor<E>> {
        dense_forward(input, &self.weight.value, &self.bias.value)
    }

    pub fn backward(&mut self, upstream_grad: &Tensor<E>) -> Result<Tensor<E>> {
        let input = self.cached_input.take().ok_or_else(|| {
            Error::InvalidArgument(format!(
                "{}: backward without a cached forward (train mode)",
                self.weight.name
            ))
        })?;
        let (dx, dw, db) = dense_backward(upstream_grad, &input, &self.weight.value)?;
        self.weight.accumulate_grad(&dw);
        self.bias.accumulate_grad(&db);
        Ok(dx)
    }

    /// Backward that keeps the cached input (for layers whose input feeds two
    /// heads, e.g. a shared trunk under separate projections).
    pub fn backward_keep_input(&mut self, upstream_grad: &Tensor<E>) -> Result<Tensor<E>> {
        let input = self.cached_input.clone().ok_or_else(|| {
            Error::InvalidArgument(format!(
                "{}: backward without a cached forward (train mode)",
                self.weight.name
            ))
        })?;
        let (dx, dw, db) = dense_backward(upstream_grad, &input, &self.weight.value)?;
        self.weight.accumulate_grad(&dw);
        self.bias.accumulate_grad(&db);
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_respects_fan_in_scale() {
        let mut rng = RngState::new(1).derive("init", 0);
        let spec = ConvSpec::new(8, 16, 3, 1, 0).unwrap();
        let layer: Conv2dLayer<f64> = Conv2dLayer::new(spec, "c", &mut rng);
        let vals = layer.weight.value.data();
        let mean: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
        let var: f64 = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        let expected = 2.0 / (8.0 * 9.0);
        assert!((var - expected).abs() < expected, "var {var} vs expected {expected}");
        assert!(layer.bias.value.data().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn backward_requires_train_forward() {
        let mut rng = RngState::new(2);
        let mut layer: DenseLayer<f32> = DenseLayer::new(3, 2, "fc", &mut rng);
        let x = Tensor::filled(&[1, 3], 0.5f32);
        let dy = Tensor::filled(&[1, 2], 1.0f32);
        layer.forward(&x, false).unwrap();
        assert!(layer.backward(&dy).is_err());
        layer.forward(&x, true).unwrap();
        assert!(layer.backward(&dy).is_ok());
        // Cache is consumed.
        assert!(layer.backward(&dy).is_err());
    }
}
