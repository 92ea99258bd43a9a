//! Image transforms for the evaluation protocols: resolution degradation
//! (blur through a lower resolution and back) and integer-pixel translation.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

fn single_channel_dims(t: &Tensor<impl Element>, op: &'static str) -> Result<(usize, usize)> {
    match t.shape() {
        [1, h, w] => Ok((*h, *w)),
        s => Err(Error::shape(op, format!("expected [1,H,W], got {s:?}"))),
    }
}

/// 2×2 mean pooling; spatial extents must be even.
pub fn avgpool2x2<E: Element>(image: &Tensor<E>) -> Result<Tensor<E>> {
    let (h, w) = single_channel_dims(image, "avgpool2x2")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "avgpool2x2 needs even extents, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = image.data();
    let quarter = E::from_f64(0.25);
    let mut out = vec![E::zero(); oh * ow];
    for oy in 0..oh {
        for ox in 0..ow {
            let i0 = (2 * oy) * w + 2 * ox;
            out[oy * ow + ox] = (x[i0] + x[i0 + 1] + x[i0 + w] + x[i0 + w + 1]) * quarter;
        }
    }
    Tensor::from_vec(vec![1, oh, ow], out)
}

/// Bilinear resize with align-corners sampling: source coordinate for output
/// index i is i·(in−1)/(out−1); an output extent of 1 samples index 0.
pub fn bilinear_resize<E: Element>(image: &Tensor<E>, out_h: usize, out_w: usize) -> Result<Tensor<E>> {
    let (h, w) = single_channel_dims(image, "bilinear_resize")?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument("resize target must be positive".into()));
    }
    let x = image.data();
    let scale = |out_i: usize, out_n: usize, in_n: usize| -> f64 {
        if out_n <= 1 {
            0.0
        } else {
            out_i as f64 * (in_n - 1) as f64 / (out_n - 1) as f64
        }
    };
    let mut out = vec![E::zero(); out_h * out_w];
    for oy in 0..out_h {
        let sy = scale(oy, out_h, h);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = sy - y0 as f64;
        for ox in 0..out_w {
            let sx = scale(ox, out_w, w);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let fx = sx - x0 as f64;
            let v00 = x[y0 * w + x0].to_f64();
            let v01 = x[y0 * w + x1].to_f64();
            let v10 = x[y1 * w + x0].to_f64();
            let v11 = x[y1 * w + x1].to_f64();
            let top = v00 + (v01 - v00) * fx;
            let bot = v10 + (v11 - v10) * fx;
            out[oy * out_w + ox] = E::from_f64(top + (bot - top) * fy);
        }
    }
    Tensor::from_vec(vec![1, out_h, out_w], out)
}

/// Blur an image by halving its resolution and bilinearly upsampling back to
/// the original size. Values stay in [0,1] (both stages are convex
/// combinations).
pub fn degrade_resolution<E: Element>(image: &Tensor<E>) -> Result<Tensor<E>> {
    let (h, w) = single_channel_dims(image, "degrade_resolution")?;
    let pooled = avgpool2x2(image)?;
    bilinear_resize(&pooled, h, w)
}

/// Shifts the image by (dx, dy) pixels with zero fill: output(i,j) =
/// input(i−dy, j−dx) where that index exists. |dx| < W and |dy| < H.
pub fn translate<E: Element>(image: &Tensor<E>, dx: i64, dy: i64) -> Result<Tensor<E>> {
    let (h, w) = single_channel_dims(image, "translate")?;
    if dx.unsigned_abs() as usize >= w || dy.unsigned_abs() as usize >= h {
        return Err(Error::InvalidArgument(format!(
            "shift ({dx},{dy}) out of range for {h}x{w} image"
        )));
    }
    let x = image.data();
    let mut out = vec![E::zero(); h * w];
    for i in 0..h {
        let src_i = i as i64 - dy;
        if src_i < 0 || src_i >= h as i64 {
            continue;
        }
        for j in 0..w {
            let src_j = j as i64 - dx;
            if src_j < 0 || src_j >= w as i64 {
                continue;
            }
            out[i * w + j] = x[src_i as usize * w + src_j as usize];
        }
    }
    Tensor::from_vec(vec![1, h, w], out)
}
