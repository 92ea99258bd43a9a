//! 2-D convolution (cross-correlation, no kernel flip) via im2col + GEMM.
//!
//! The whole batch is lowered into one column matrix so a single GEMM covers
//! all samples; a cheap permutation restores [N,O,H',W'] layout afterwards.

use super::{as_nchw, ConvSpec};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Lower sample `x` ([C,H,W], flat) into columns of `col`.
///
/// `col` is [C·k·k, total_cols] row-major; this sample occupies columns
/// [col_off, col_off + oh·ow). Entry (c·k+ki)·k+kj, oy·ow+ox holds
/// x[c][oy·s+ki−p][ox·s+kj−p], zero outside the image.
#[allow(clippy::too_many_arguments)]
fn im2col<E: Element>(
    x: &[E],
    c: usize,
    h: usize,
    w: usize,
    spec: &ConvSpec,
    oh: usize,
    ow: usize,
    col: &mut [E],
    total_cols: usize,
    col_off: usize,
) {
    let (k, s, p) = (spec.kernel, spec.stride, spec.padding);
    let mut row = 0usize;
    for ci in 0..c {
        let plane = &x[ci * h * w..][..h * w];
        for ki in 0..k {
            for kj in 0..k {
                let base = row * total_cols + col_off;
                row += 1;
                for oy in 0..oh {
                    let iy = (oy * s + ki) as isize - p as isize;
                    let seg = &mut col[base + oy * ow..][..ow];
                    if iy < 0 || iy >= h as isize {
                        seg.fill(E::zero());
                        continue;
                    }
                    let xrow = &plane[iy as usize * w..][..w];
                    if p == 0 && s == 1 {
                        seg.copy_from_slice(&xrow[kj..kj + ow]);
                    } else {
                        for (ox, slot) in seg.iter_mut().enumerate() {
                            let ix = (ox * s + kj) as isize - p as isize;
                            *slot = if ix >= 0 && ix < w as isize {
                                xrow[ix as usize]
                            } else {
                                E::zero()
                            };
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-add the column gradient back onto the image: exact adjoint of
/// `im2col` for one sample.
#[allow(clippy::too_many_arguments)]
fn col2im_add<E: Element>(
    dcol: &[E],
    c: usize,
    h: usize,
    w: usize,
    spec: &ConvSpec,
    oh: usize,
    ow: usize,
    dx: &mut [E],
    total_cols: usize,
    col_off: usize,
) {
    let (k, s, p) = (spec.kernel, spec.stride, spec.padding);
    let mut row = 0usize;
    for ci in 0..c {
        let plane = &mut dx[ci * h * w..][..h * w];
        for ki in 0..k {
            for kj in 0..k {
                let base = row * total_cols + col_off;
                row += 1;
                for oy in 0..oh {
                    let iy = (oy * s + ki) as isize - p as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let seg = &dcol[base + oy * ow..][..ow];
                    let xrow = &mut plane[iy as usize * w..][..w];
                    if p == 0 && s == 1 {
                        for (ox, &g) in seg.iter().enumerate() {
                            xrow[kj + ox] = xrow[kj + ox] + g;
                        }
                    } else {
                        for (ox, &g) in seg.iter().enumerate() {
                            let ix = (ox * s + kj) as isize - p as isize;
                            if ix >= 0 && ix < w as isize {
                                xrow[ix as usize] = xrow[ix as usize] + g;
                            }
                        }
                    }
                }
            }
        }
    }
}

struct Geometry {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    batched: bool,
}

fn check_geometry<E: Element>(
    input: &Tensor<E>,
    spec: &ConvSpec,
    weights: &Tensor<E>,
    bias: Option<&Tensor<E>>,
    op: &'static str,
) -> Result<Geometry> {
    let (n, c, h, w, batched) = as_nchw(input.shape(), op)?;
    if c != spec.in_channels {
        return Err(Error::shape(
            op,
            format!("input has {c} channels, spec expects {}", spec.in_channels),
        ));
    }
    if weights.shape() != spec.weight_shape() {
        return Err(Error::shape(
            op,
            format!("weights shape {:?} does not match spec {:?}", weights.shape(), spec.weight_shape()),
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [spec.out_channels] {
            return Err(Error::shape(
                op,
                format!("bias shape {:?}, expected [{}]", b.shape(), spec.out_channels),
            ));
        }
    }
    let oh = spec.output_extent(h)?;
    let ow = spec.output_extent(w)?;
    Ok(Geometry { n, c, h, w, oh, ow, batched })
}

/// Forward convolution; output [O,H',W'] or [N,O,H',W'] matching input rank.
pub fn conv2d_forward<E: Element>(
    input: &Tensor<E>,
    spec: &ConvSpec,
    weights: &Tensor<E>,
    bias: &Tensor<E>,
) -> Result<Tensor<E>> {
    let g = check_geometry(input, spec, weights, Some(bias), "conv2d_forward")?;
    let (o, k) = (spec.out_channels, spec.kernel);
    let ckk = g.c * k * k;
    let ohw = g.oh * g.ow;
    let cols = g.n * ohw;

    let mut col = vec![E::zero(); ckk * cols];
    for i in 0..g.n {
        im2col(
            &input.data()[i * g.c * g.h * g.w..][..g.c * g.h * g.w],
            g.c,
            g.h,
            g.w,
            spec,
            g.oh,
            g.ow,
            &mut col,
            cols,
            i * ohw,
        );
    }

    // raw[o][sample·ohw + j] = Σ_r W[o][r]·col[r][sample·ohw + j]
    let mut raw = vec![E::zero(); o * cols];
    unsafe {
        E::gemm(
            o,
            ckk,
            cols,
            E::one(),
            weights.data().as_ptr(),
            ckk as isize,
            1,
            col.as_ptr(),
            cols as isize,
            1,
            E::zero(),
            raw.as_mut_ptr(),
            cols as isize,
            1,
        );
    }

    // Permute to [N,O,ohw] and add bias.
    let mut out = vec![E::zero(); g.n * o * ohw];
    for oc in 0..o {
        let b = bias.data()[oc];
        let src_row = &raw[oc * cols..][..cols];
        for i in 0..g.n {
            let dst = &mut out[(i * o + oc) * ohw..][..ohw];
            for (d, &s) in dst.iter_mut().zip(&src_row[i * ohw..][..ohw]) {
                *d = s + b;
            }
        }
    }

    let shape = if g.batched {
        vec![g.n, o, g.oh, g.ow]
    } else {
        vec![o, g.oh, g.ow]
    };
    Tensor::from_vec(shape, out)
}

/// Gradients of the forward map. `upstream_grad` must have the forward
/// output's shape; returns (input_grad, weight_grad, bias_grad).
pub fn conv2d_backward<E: Element>(
    upstream_grad: &Tensor<E>,
    saved_input: &Tensor<E>,
    spec: &ConvSpec,
    weights: &Tensor<E>,
) -> Result<(Tensor<E>, Tensor<E>, Tensor<E>)> {
    let g = check_geometry(saved_input, spec, weights, None, "conv2d_backward")?;
    let (o, k) = (spec.out_channels, spec.kernel);
    let expected: &[usize] = if g.batched {
        &[g.n, o, g.oh, g.ow]
    } else {
        &[o, g.oh, g.ow]
    };
    if upstream_grad.shape() != expected {
        return Err(Error::shape(
            "conv2d_backward",
            format!("upstream grad shape {:?}, expected {:?}", upstream_grad.shape(), expected),
        ));
    }

    let ckk = g.c * k * k;
    let ohw = g.oh * g.ow;
    let cols = g.n * ohw;

    let mut col = vec![E::zero(); ckk * cols];
    for i in 0..g.n {
        im2col(
            &saved_input.data()[i * g.c * g.h * g.w..][..g.c * g.h * g.w],
            g.c,
            g.h,
            g.w,
            spec,
            g.oh,
            g.ow,
            &mut col,
            cols,
            i * ohw,
        );
    }

    // dy in [O, cols] layout (inverse of the forward permutation).
    let mut dy = vec![E::zero(); o * cols];
    for i in 0..g.n {
        for oc in 0..o {
            let src = &upstream_grad.data()[(i * o + oc) * ohw..][..ohw];
            dy[oc * cols + i * ohw..][..ohw].copy_from_slice(src);
        }
    }

    // bias_grad[o] = Σ_cols dy
    let mut db = vec![E::zero(); o];
    for oc in 0..o {
        let mut acc = E::zero();
        for &v in &dy[oc * cols..][..cols] {
            acc = acc + v;
        }
        db[oc] = acc;
    }

    // weight_grad = dy · colᵀ  → [O, ckk]
    let mut dw = vec![E::zero(); o * ckk];
    unsafe {
        E::gemm(
            o,
            cols,
            ckk,
            E::one(),
            dy.as_ptr(),
            cols as isize,
            1,
            col.as_ptr(),
            1,
            cols as isize,
            E::zero(),
            dw.as_mut_ptr(),
            ckk as isize,
            1,
        );
    }

    // dcol = Wᵀ · dy → [ckk, cols], then scatter back to image space.
    let mut dcol = vec![E::zero(); ckk * cols];
    unsafe {
        E::gemm(
            ckk,
            o,
            cols,
            E::one(),
            weights.data().as_ptr(),
            1,
            ckk as isize,
            dy.as_ptr(),
            cols as isize,
            1,
            E::zero(),
            dcol.as_mut_ptr(),
            cols as isize,
            1,
        );
    }
    let mut dx = vec![E::zero(); g.n * g.c * g.h * g.w];
    for i in 0..g.n {
        col2im_add(
            &dcol,
            g.c,
            g.h,
            g.w,
            spec,
            g.oh,
            g.ow,
            &mut dx[i * g.c * g.h * g.w..][..g.c * g.h * g.w],
            cols,
            i * ohw,
        );
    }

    let dx = Tensor::from_vec(saved_input.shape().to_vec(), dx)?;
    let dw = Tensor::from_vec(spec.weight_shape().to_vec(), dw)?;
    let db = Tensor::from_vec(vec![o], db)?;
    Ok((dx, dw, db))
}
