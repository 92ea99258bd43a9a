//! 2×2 max pooling, stride 2. Odd trailing rows/columns are truncated.

use super::as_nchw;
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Returns the pooled tensor plus, for every output element, the flat index
/// (into the input's data slice) of the max it came from. Ties go to the
/// first element in row-major window order, so backward routing is
/// deterministic.
pub fn maxpool2d<E: Element>(input: &Tensor<E>) -> Result<(Tensor<E>, Vec<usize>)> {
    let (n, c, h, w, batched) = as_nchw(input.shape(), "maxpool2d")?;
    let oh = h / 2;
    let ow = w / 2;
    if oh == 0 || ow == 0 {
        return Err(Error::shape(
            "maxpool2d",
            format!("spatial extents {h}x{w} too small for a 2x2 window"),
        ));
    }
    let x = input.data();
    let mut out = vec![E::zero(); n * c * oh * ow];
    let mut argmax = vec![0usize; out.len()];
    let mut oi = 0usize;
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let i0 = base + (2 * oy) * w + 2 * ox;
                let cand = [i0, i0 + 1, i0 + w, i0 + w + 1];
                let mut best = cand[0];
                let mut best_v = x[best];
                for &idx in &cand[1..] {
                    if x[idx] > best_v {
                        best_v = x[idx];
                        best = idx;
                    }
                }
                out[oi] = best_v;
                argmax[oi] = best;
                oi += 1;
            }
        }
    }
    let shape = if batched { vec![n, c, oh, ow] } else { vec![c, oh, ow] };
    Ok((Tensor::from_vec(shape, out)?, argmax))
}

/// Routes each upstream gradient to the input position recorded in `argmax`.
pub fn maxpool2d_backward<E: Element>(
    upstream_grad: &Tensor<E>,
    argmax: &[usize],
    input_shape: &[usize],
) -> Result<Tensor<E>> {
    if upstream_grad.len() != argmax.len() {
        return Err(Error::shape(
            "maxpool2d_backward",
            format!("upstream has {} elements, argmax {}", upstream_grad.len(), argmax.len()),
        ));
    }
    let mut dx = Tensor::zeros(input_shape);
    let d = dx.data_mut();
    for (&g, &idx) in upstream_grad.data().iter().zip(argmax) {
        if idx >= d.len() {
            return Err(Error::shape("maxpool2d_backward", "argmax index out of range"));
        }
        d[idx] = d[idx] + g;
    }
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_window_takes_max() {
        let x = Tensor::from_vec(vec![1, 2, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        let (y, am) = maxpool2d(&x).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1]);
        assert_eq!(y.data(), &[4.0]);
        assert_eq!(am, vec![3]);
    }

    #[test]
    fn constant_input_stays_constant_and_ties_go_first() {
        let x = Tensor::filled(&[1, 4, 4], 7.0f32);
        let (y, am) = maxpool2d(&x).unwrap();
        assert!(y.data().iter().all(|&v| v == 7.0));
        // First index in row-major window order wins the tie.
        assert_eq!(am, vec![0, 2, 8, 10]);
    }

    #[test]
    fn odd_trailing_extent_is_truncated() {
        let x = Tensor::from_vec(vec![1, 3, 5], (0..15).map(|v| v as f32).collect()).unwrap();
        let (y, _) = maxpool2d(&x).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2]);
        // Windows cover rows 0-1, cols 0-1 and 2-3; row 2 and col 4 dropped.
        assert_eq!(y.data(), &[6.0, 8.0]);
    }

    #[test]
    fn backward_routes_to_argmax() {
        let x = Tensor::from_vec(vec![1, 2, 2], vec![1.0f32, 9.0, 3.0, 4.0]).unwrap();
        let (_, am) = maxpool2d(&x).unwrap();
        let dy = Tensor::from_vec(vec![1, 1, 1], vec![5.0f32]).unwrap();
        let dx = maxpool2d_backward(&dy, &am, &[1, 2, 2]).unwrap();
        assert_eq!(dx.data(), &[0.0, 5.0, 0.0, 0.0]);
    }

    #[test]
    fn too_small_input_rejected() {
        let x = Tensor::<f32>::zeros(&[1, 1, 4]);
        assert!(maxpool2d(&x).is_err());
    }
}
