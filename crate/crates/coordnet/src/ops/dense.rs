//! Fully connected affine map over a batch.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

fn dims2(t: &Tensor<impl Element>, op: &'static str, what: &str) -> Result<(usize, usize)> {
    match t.shape() {
        [a, b] => Ok((*a, *b)),
        s => Err(Error::shape(op, format!("{what} must be 2-D, got {s:?}"))),
    }
}

/// input [N,D] · weights [D,M] + bias [M] → [N,M].
pub fn dense_forward<E: Element>(
    input: &Tensor<E>,
    weights: &Tensor<E>,
    bias: &Tensor<E>,
) -> Result<Tensor<E>> {
    let (n, d) = dims2(input, "dense_forward", "input")?;
    let (dw, m) = dims2(weights, "dense_forward", "weights")?;
    if d != dw {
        return Err(Error::shape(
            "dense_forward",
            format!("input feature dim {d} does not match weight rows {dw}"),
        ));
    }
    if bias.shape() != [m] {
        return Err(Error::shape(
            "dense_forward",
            format!("bias shape {:?}, expected [{m}]", bias.shape()),
        ));
    }
    let mut out = vec![E::zero(); n * m];
    for row in out.chunks_exact_mut(m) {
        row.copy_from_slice(bias.data());
    }
    unsafe {
        E::gemm(
            n,
            d,
            m,
            E::one(),
            input.data().as_ptr(),
            d as isize,
            1,
            weights.data().as_ptr(),
            m as isize,
            1,
            E::one(),
            out.as_mut_ptr(),
            m as isize,
            1,
        );
    }
    Tensor::from_vec(vec![n, m], out)
}

/// Gradients of `dense_forward`: returns (input_grad [N,D], weight_grad [D,M],
/// bias_grad [M]).
pub fn dense_backward<E: Element>(
    upstream_grad: &Tensor<E>,
    saved_input: &Tensor<E>,
    weights: &Tensor<E>,
) -> Result<(Tensor<E>, Tensor<E>, Tensor<E>)> {
    let (n, d) = dims2(saved_input, "dense_backward", "input")?;
    let (dw, m) = dims2(weights, "dense_backward", "weights")?;
    if d != dw {
        return Err(Error::shape("dense_backward", format!("feature dims {d} vs {dw}")));
    }
    if upstream_grad.shape() != [n, m] {
        return Err(Error::shape(
            "dense_backward",
            format!("upstream shape {:?}, expected [{n}, {m}]", upstream_grad.shape()),
        ));
    }

    // input_grad = dY · Wᵀ
    let mut dx = vec![E::zero(); n * d];
    unsafe {
        E::gemm(
            n,
            m,
            d,
            E::one(),
            upstream_grad.data().as_ptr(),
            m as isize,
            1,
            weights.data().as_ptr(),
            1,
            m as isize,
            E::zero(),
            dx.as_mut_ptr(),
            d as isize,
            1,
        );
    }

    // weight_grad = Xᵀ · dY
    let mut dwg = vec![E::zero(); d * m];
    unsafe {
        E::gemm(
            d,
            n,
            m,
            E::one(),
            saved_input.data().as_ptr(),
            1,
            d as isize,
            upstream_grad.data().as_ptr(),
            m as isize,
            1,
            E::zero(),
            dwg.as_mut_ptr(),
            m as isize,
            1,
        );
    }

    // bias_grad = column sums of dY, accumulated in batch order.
    let mut db = vec![E::zero(); m];
    for row in upstream_grad.data().chunks_exact(m) {
        for (acc, &g) in db.iter_mut().zip(row) {
            *acc = *acc + g;
        }
    }

    Ok((
        Tensor::from_vec(vec![n, d], dx)?,
        Tensor::from_vec(vec![d, m], dwg)?,
        Tensor::from_vec(vec![m], db)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights_pass_input_through() {
        let x = Tensor::from_vec(vec![2, 3], vec![1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mut w = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            let idx = i * 3 + i;
            w.data_mut()[idx] = 1.0;
        }
        let b = Tensor::zeros(&[3]);
        let y = dense_forward(&x, &w, &b).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn zero_weights_give_bias_rows() {
        let x = Tensor::filled(&[3, 4], 2.0f64);
        let w = Tensor::zeros(&[4, 2]);
        let b = Tensor::from_vec(vec![2], vec![0.5, -1.5]).unwrap();
        let y = dense_forward(&x, &w, &b).unwrap();
        for row in y.data().chunks_exact(2) {
            assert_eq!(row, &[0.5, -1.5]);
        }
    }

    #[test]
    fn backward_matches_hand_computation() {
        // Single sample, 2 -> 2: y = xW + b.
        let x = Tensor::from_vec(vec![1, 2], vec![1.0f64, 2.0]).unwrap();
        let w = Tensor::from_vec(vec![2, 2], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let dy = Tensor::from_vec(vec![1, 2], vec![1.0, -1.0]).unwrap();
        let (dx, dwg, db) = dense_backward(&dy, &x, &w).unwrap();
        // dx = dy·Wᵀ = [0.1·1+0.2·(−1), 0.3·1+0.4·(−1)]
        assert!((dx.data()[0] - (0.1 - 0.2)).abs() < 1e-12);
        assert!((dx.data()[1] - (0.3 - 0.4)).abs() < 1e-12);
        // dW = xᵀ·dy
        assert_eq!(dwg.data(), &[1.0, -1.0, 2.0, -2.0]);
        assert_eq!(db.data(), &[1.0, -1.0]);
    }

    #[test]
    fn dimension_mismatches_rejected() {
        let x = Tensor::<f32>::zeros(&[2, 3]);
        let w = Tensor::zeros(&[4, 2]);
        let b = Tensor::zeros(&[2]);
        assert!(dense_forward(&x, &w, &b).is_err());
        let w = Tensor::zeros(&[3, 2]);
        let b_bad = Tensor::zeros(&[3]);
        assert!(dense_forward(&x, &w, &b_bad).is_err());
        let dy = Tensor::zeros(&[2, 3]);
        assert!(dense_backward(&dy, &x, &w).is_err());
    }
}
