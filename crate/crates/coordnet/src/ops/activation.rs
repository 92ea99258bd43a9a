//! Elementwise activations and the row-wise softmax.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

pub fn relu<E: Element>(input: &Tensor<E>) -> Tensor<E> {
    input.map(|v| if v > E::zero() { v } else { E::zero() })
}

/// Gradient mask against the *pre-activation* values; the subgradient at
/// exactly 0 is taken as 0.
pub fn relu_backward<E: Element>(upstream_grad: &Tensor<E>, pre_activation: &Tensor<E>) -> Tensor<E> {
    assert_eq!(upstream_grad.shape(), pre_activation.shape(), "relu_backward shape mismatch");
    let data = upstream_grad
        .data()
        .iter()
        .zip(pre_activation.data())
        .map(|(&g, &x)| if x > E::zero() { g } else { E::zero() })
        .collect();
    Tensor::from_vec(upstream_grad.shape().to_vec(), data).unwrap()
}

/// Numerically stable logistic function.
pub fn sigmoid<E: Element>(input: &Tensor<E>) -> Tensor<E> {
    input.map(|v| {
        if v >= E::zero() {
            E::one() / (E::one() + (-v).exp())
        } else {
            let e = v.exp();
            e / (E::one() + e)
        }
    })
}

/// Gradient through sigmoid given its *output* y: dy·y·(1−y).
pub fn sigmoid_backward<E: Element>(upstream_grad: &Tensor<E>, output: &Tensor<E>) -> Tensor<E> {
    assert_eq!(upstream_grad.shape(), output.shape(), "sigmoid_backward shape mismatch");
    let data = upstream_grad
        .data()
        .iter()
        .zip(output.data())
        .map(|(&g, &y)| g * y * (E::one() - y))
        .collect();
    Tensor::from_vec(upstream_grad.shape().to_vec(), data).unwrap()
}

/// Row-wise softmax over [N,M] logits, computed with per-row max subtraction
/// so large logits cannot overflow.
pub fn softmax<E: Element>(input: &Tensor<E>) -> Result<Tensor<E>> {
    let (n, m) = match input.shape() {
        [n, m] => (*n, *m),
        s => return Err(Error::shape("softmax", format!("expected [N,M], got {s:?}"))),
    };
    if m == 0 {
        return Err(Error::shape("softmax", "zero class axis"));
    }
    let mut out = vec![E::zero(); n * m];
    for (row_out, row_in) in out.chunks_exact_mut(m).zip(input.data().chunks_exact(m)) {
        let mut mx = row_in[0];
        for &v in &row_in[1..] {
            if v > mx {
                mx = v;
            }
        }
        let mut sum = E::zero();
        for (o, &v) in row_out.iter_mut().zip(row_in) {
            let e = (v - mx).exp();
            *o = e;
            sum = sum + e;
        }
        for o in row_out.iter_mut() {
            *o = *o / sum;
        }
    }
    Tensor::from_vec(vec![n, m], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_clamps_negatives() {
        let x = Tensor::from_vec(vec![4], vec![-1.0f32, 0.0, 0.5, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 0.5, 2.0]);
    }

    #[test]
    fn relu_backward_masks_by_pre_activation() {
        let pre = Tensor::from_vec(vec![4], vec![-1.0f32, 0.0, 0.5, 2.0]).unwrap();
        let dy = Tensor::filled(&[4], 3.0f32);
        assert_eq!(relu_backward(&dy, &pre).data(), &[0.0, 0.0, 3.0, 3.0]);
    }

    #[test]
    fn softmax_uniform_on_equal_logits() {
        let x = Tensor::filled(&[2, 10], 4.2f64);
        let y = softmax(&x).unwrap();
        for &v in y.data() {
            assert!((v - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one_and_handle_huge_logits() {
        let x = Tensor::from_vec(vec![1, 2], vec![1000.0f32, 0.0]).unwrap();
        let y = softmax(&x).unwrap();
        assert!(y.all_finite());
        assert!((y.data()[0] - 1.0).abs() < 1e-6);
        assert!(y.data()[1] >= 0.0 && y.data()[1] < 1e-6);
        let s: f32 = y.data().iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        let x = Tensor::from_vec(vec![4], vec![-300.0f64, -1.0, 1.0, 300.0]).unwrap();
        let y = sigmoid(&x);
        assert!(y.all_finite());
        assert!(y.data()[0] >= 0.0 && y.data()[0] < 1e-100);
        assert!((y.data()[3] - 1.0).abs() < 1e-12);
        assert!((y.data()[1] + y.data()[2] - 1.0).abs() < 1e-12);
    }
}
