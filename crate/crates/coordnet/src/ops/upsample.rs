//! Nearest-neighbor 2x upsampling (decoder building block).

use super::as_nchw;
use crate::error::Result;
use crate::tensor::{Element, Tensor};

/// Each input pixel becomes a 2×2 block: [.., H, W] → [.., 2H, 2W].
pub fn upsample2x<E: Element>(input: &Tensor<E>) -> Result<Tensor<E>> {
    let (n, c, h, w, batched) = as_nchw(input.shape(), "upsample2x")?;
    let (oh, ow) = (2 * h, 2 * w);
    let x = input.data();
    let mut out = vec![E::zero(); n * c * oh * ow];
    for plane in 0..n * c {
        let src = &x[plane * h * w..][..h * w];
        let dst = &mut out[plane * oh * ow..][..oh * ow];
        for iy in 0..h {
            for ix in 0..w {
                let v = src[iy * w + ix];
                let o = (2 * iy) * ow + 2 * ix;
                dst[o] = v;
                dst[o + 1] = v;
                dst[o + ow] = v;
                dst[o + ow + 1] = v;
            }
        }
    }
    let shape = if batched { vec![n, c, oh, ow] } else { vec![c, oh, ow] };
    Tensor::from_vec(shape, out)
}

/// Adjoint of `upsample2x`: sums each 2×2 output block back onto its source
/// pixel.
pub fn upsample2x_backward<E: Element>(upstream_grad: &Tensor<E>) -> Result<Tensor<E>> {
    let (n, c, oh, ow, batched) = as_nchw(upstream_grad.shape(), "upsample2x_backward")?;
    debug_assert!(oh % 2 == 0 && ow % 2 == 0, "upstream of upsample2x has even extents");
    let (h, w) = (oh / 2, ow / 2);
    let dy = upstream_grad.data();
    let mut dx = vec![E::zero(); n * c * h * w];
    for plane in 0..n * c {
        let src = &dy[plane * oh * ow..][..oh * ow];
        let dst = &mut dx[plane * h * w..][..h * w];
        for iy in 0..h {
            for ix in 0..w {
                let o = (2 * iy) * ow + 2 * ix;
                dst[iy * w + ix] = src[o] + src[o + 1] + src[o + ow] + src[o + ow + 1];
            }
        }
    }
    let shape = if batched { vec![n, c, h, w] } else { vec![c, h, w] };
    Tensor::from_vec(shape, dx)
}
