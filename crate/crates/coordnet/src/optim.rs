//! SGD and Adam parameter updates.

use crate::error::{Error, Result};
use crate::param::Parameter;
use crate::tensor::Element;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

struct AdamSlot<E> {
    m: Vec<E>,
    v: Vec<E>,
}

/// Owns per-parameter optimizer state. Parameters must be passed in the same
/// order every step (state is positional).
pub struct Optimizer<E: Element> {
    kind: OptimizerKind,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    slots: Vec<AdamSlot<E>>,
}

impl<E: Element> Optimizer<E> {
    pub fn sgd(lr: f64) -> Self {
        Optimizer { kind: OptimizerKind::Sgd, lr, beta1: 0.0, beta2: 0.0, eps: 0.0, t: 0, slots: Vec::new() }
    }

    /// Adam with the usual defaults: β1 0.9, β2 0.999, ε 1e-8.
    pub fn adam(lr: f64) -> Self {
        Self::adam_with(lr, 0.9, 0.999, 1e-8)
    }

    pub fn adam_with(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Optimizer { kind: OptimizerKind::Adam, lr, beta1, beta2, eps, t: 0, slots: Vec::new() }
    }

    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        match kind {
            OptimizerKind::Sgd => Self::sgd(lr),
            OptimizerKind::Adam => Self::adam(lr),
        }
    }

    /// Steps taken so far.
    pub fn t(&self) -> u64 {
        self.t
    }

    /// Applies one update from the accumulated gradients. Rejects non-finite
    /// gradients, naming the offending parameter.
    pub fn step(&mut self, params: &mut [&mut Parameter<E>]) -> Result<()> {
        for p in params.iter() {
            if !p.grad.all_finite() {
                return Err(Error::NonFinite { context: format!("gradient of {}", p.name) });
            }
        }
        self.t += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                let lr = E::from_f64(self.lr);
                for p in params.iter_mut() {
                    let (value, grad) = (&mut p.value, &p.grad);
                    for (w, &g) in value.data_mut().iter_mut().zip(grad.data()) {
                        *w = *w - lr * g;
                    }
                }
            }
            OptimizerKind::Adam => {
                if self.slots.is_empty() {
                    self.slots = params
                        .iter()
                        .map(|p| AdamSlot {
                            m: vec![E::zero(); p.value.len()],
                            v: vec![E::zero(); p.value.len()],
                        })
                        .collect();
                }
                if self.slots.len() != params.len() {
                    return Err(Error::InvalidArgument(format!(
                        "optimizer saw {} parameters, now {}",
                        self.slots.len(),
                        params.len()
                    )));
                }
                let b1 = E::from_f64(self.beta1);
                let b2 = E::from_f64(self.beta2);
                let one_m_b1 = E::from_f64(1.0 - self.beta1);
                let one_m_b2 = E::from_f64(1.0 - self.beta2);
                let eps = E::from_f64(self.eps);
                let lr = E::from_f64(self.lr);
                // Bias corrections computed in f64, applied per element.
                let c1 = E::from_f64(1.0 / (1.0 - self.beta1.powi(self.t as i32)));
                let c2 = E::from_f64(1.0 / (1.0 - self.beta2.powi(self.t as i32)));
                for (p, slot) in params.iter_mut().zip(&mut self.slots) {
                    if p.value.len() != slot.m.len() {
                        return Err(Error::InvalidArgument(format!(
                            "parameter {} changed size under the optimizer",
                            p.name
                        )));
                    }
                    let grad = p.grad.data().to_vec();
                    for (((w, &g), m), v) in p
                        .value
                        .data_mut()
                        .iter_mut()
                        .zip(&grad)
                        .zip(&mut slot.m)
                        .zip(&mut slot.v)
                    {
                        *m = b1 * *m + one_m_b1 * g;
                        *v = b2 * *v + one_m_b2 * g * g;
                        let m_hat = *m * c1;
                        let v_hat = *v * c2;
                        *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
            let mut p = Parameter::new("w", Tensor::filled(&[3], 1.5f64));
            let mut opt = Optimizer::new(kind, 0.1);
            opt.step(&mut [&mut p]).unwrap();
            assert!(p.value.data().iter().all(|&w| w == 1.5));
        }
    }

    #[test]
    fn sgd_scalar_step() {
        let mut p = Parameter::new("w", Tensor::scalar(1.0f64));
        p.grad.data_mut()[0] = 1.0;
        let mut opt = Optimizer::sgd(0.1);
        opt.step(&mut [&mut p]).unwrap();
        assert!((p.value.data()[0] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn adam_descends_a_quadratic() {
        // f(w) = w², grad 2w, from w=1 with lr 0.1.
        let mut p = Parameter::new("w", Tensor::scalar(1.0f64));
        let mut opt = Optimizer::adam(0.1);
        for _ in 0..100 {
            p.zero_grad();
            let w = p.value.data()[0];
            p.grad.data_mut()[0] = 2.0 * w;
            opt.step(&mut [&mut p]).unwrap();
        }
        assert!(p.value.data()[0].abs() < 0.05, "got {}", p.value.data()[0]);
    }

    #[test]
    fn adam_matches_independent_scalar_recurrence() {
        let (lr, b1, b2, eps) = (0.01f64, 0.9, 0.999, 1e-8);
        let mut p = Parameter::new("w", Tensor::scalar(0.7f64));
        let mut opt = Optimizer::adam_with(lr, b1, b2, eps);
        // Reference recurrence maintained by hand.
        let (mut w, mut m, mut v) = (0.7f64, 0.0f64, 0.0f64);
        for t in 1..=25u32 {
            let g = 3.0 * w * w - 1.0; // arbitrary smooth gradient
            p.zero_grad();
            p.grad.data_mut()[0] = g;
            opt.step(&mut [&mut p]).unwrap();

            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let m_hat = m / (1.0 - b1.powi(t as i32));
            let v_hat = v / (1.0 - b2.powi(t as i32));
            w -= lr * m_hat / (v_hat.sqrt() + eps);
            assert!((p.value.data()[0] - w).abs() < 1e-12, "diverged at t={t}");
        }
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let mut p = Parameter::new("conv1.weight", Tensor::scalar(1.0f32));
        p.grad.data_mut()[0] = f32::NAN;
        let mut opt = Optimizer::adam(0.1);
        let err = opt.step(&mut [&mut p]).unwrap_err();
        assert!(err.to_string().contains("conv1.weight"), "{err}");
    }
}
