//! Cross-checks the GEMM-based convolution and the pooling kernel against
//! independent nested-loop implementations written directly from the
//! definitions. The reference code shares nothing with the production path —
//! no im2col, no GEMM, no argmax bookkeeping — so a layout or indexing slip
//! in either one shows up as a mismatch.

use coordnet::ops::{conv2d_forward, maxpool2d, ConvSpec};
use coordnet::rng::RngState;
use coordnet::{Element, Tensor};

const SHAPES: u64 = 50;

fn normal_tensor<E: Element>(rng: &mut RngState, shape: &[usize]) -> Tensor<E> {
    let len: usize = shape.iter().product();
    let data = (0..len).map(|_| rng.normal::<E>()).collect();
    Tensor::from_vec(shape.to_vec(), data).unwrap()
}

/// Direct cross-correlation: out[n][o][i][j] = b[o] +
/// Σ_{c,ki,kj} x[n][c][i·s − p + ki][j·s − p + kj] · w[o][c][ki][kj],
/// with out-of-range taps contributing zero.
#[allow(clippy::too_many_arguments)]
fn conv_reference<E: Element>(
    x: &Tensor<E>,
    w: &Tensor<E>,
    b: &Tensor<E>,
    n: usize,
    c: usize,
    h: usize,
    wd: usize,
    o: usize,
    k: usize,
    s: usize,
    p: usize,
) -> Vec<f64> {
    let oh = (h + 2 * p - k) / s + 1;
    let ow = (wd + 2 * p - k) / s + 1;
    let xd = x.data();
    let wdat = w.data();
    let bd = b.data();
    let mut out = vec![0.0f64; n * o * oh * ow];
    for ni in 0..n {
        for oi in 0..o {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = Element::to_f64(bd[oi]);
                    for ci in 0..c {
                        for ki in 0..k {
                            for kj in 0..k {
                                let ii = (i * s + ki) as isize - p as isize;
                                let jj = (j * s + kj) as isize - p as isize;
                                if ii < 0 || jj < 0 || ii >= h as isize || jj >= wd as isize {
                                    continue;
                                }
                                let xv = xd[((ni * c + ci) * h + ii as usize) * wd + jj as usize];
                                let wv = wdat[((oi * c + ci) * k + ki) * k + kj];
                                acc += Element::to_f64(xv) * Element::to_f64(wv);
                            }
                        }
                    }
                    out[((ni * o + oi) * oh + i) * ow + j] = acc;
                }
            }
        }
    }
    out
}

/// Direct 2×2 stride-2 window maximum; trailing odd rows/columns dropped.
fn maxpool_reference<E: Element>(
    x: &Tensor<E>,
    n: usize,
    c: usize,
    h: usize,
    w: usize,
) -> Vec<E> {
    let (oh, ow) = (h / 2, w / 2);
    let xd = x.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    for ni in 0..n {
        for ci in 0..c {
            for i in 0..oh {
                for j in 0..ow {
                    let mut best = None::<E>;
                    for di in 0..2 {
                        for dj in 0..2 {
                            let v = xd[((ni * c + ci) * h + 2 * i + di) * w + 2 * j + dj];
                            best = Some(match best {
                                Some(b) if b >= v => b,
                                _ => v,
                            });
                        }
                    }
                    out.push(best.unwrap());
                }
            }
        }
    }
    out
}

fn conv_matches_reference<E: Element>(rel_tol: f64) {
    for seed in 0..SHAPES {
        let mut rng = RngState::new(700 + seed);
        let n = 1 + rng.below(3);
        let c = 1 + rng.below(4);
        let o = 1 + rng.below(4);
        let k = 1 + rng.below(4);
        let s = 1 + rng.below(3);
        let p = rng.below(3);
        // Keep the padded extent at or above the kernel.
        let h = k.saturating_sub(2 * p).max(1) + rng.below(8);
        let w = k.saturating_sub(2 * p).max(1) + rng.below(8);
        let spec = ConvSpec::new(c, o, k, s, p).unwrap();
        let x = normal_tensor::<E>(&mut rng, &[n, c, h, w]);
        let wt = normal_tensor::<E>(&mut rng, &spec.weight_shape());
        let b = normal_tensor::<E>(&mut rng, &[o]);

        let got = conv2d_forward(&x, &spec, &wt, &b).unwrap();
        let want = conv_reference(&x, &wt, &b, n, c, h, w, o, k, s, p);
        assert_eq!(got.len(), want.len(), "shape mismatch at seed {seed}");
        for (idx, (g, expect)) in got.data().iter().zip(&want).enumerate() {
            let gv = Element::to_f64(*g);
            let err = (gv - expect).abs();
            // Relative to the accumulation magnitude; the absolute floor
            // covers outputs whose terms cancel to near zero.
            let bound = rel_tol * expect.abs().max(1.0);
            assert!(
                err <= bound,
                "conv mismatch at seed {seed} idx {idx}: {gv} vs {expect} \
                 (n={n} c={c} o={o} k={k} s={s} p={p} h={h} w={w})"
            );
        }
    }
}

fn maxpool_matches_reference<E: Element>() {
    for seed in 0..SHAPES {
        let mut rng = RngState::new(800 + seed);
        let n = 1 + rng.below(3);
        let c = 1 + rng.below(4);
        let h = 2 + rng.below(12);
        let w = 2 + rng.below(12);
        let x = normal_tensor::<E>(&mut rng, &[n, c, h, w]);

        let (got, argmax) = maxpool2d(&x).unwrap();
        let want = maxpool_reference(&x, n, c, h, w);
        assert_eq!(got.data(), &want[..], "maxpool mismatch at seed {seed} (h={h} w={w})");
        // The recorded winner must point back at the value it claims.
        for (oi, &flat) in argmax.iter().enumerate() {
            assert_eq!(
                x.data()[flat],
                got.data()[oi],
                "argmax at seed {seed} output {oi} points at a non-maximal entry"
            );
        }
    }
}

#[test]
fn conv_forward_matches_nested_loop_reference_f32() {
    conv_matches_reference::<f32>(1e-5);
}

#[test]
fn conv_forward_matches_nested_loop_reference_f64() {
    conv_matches_reference::<f64>(1e-12);
}

#[test]
fn maxpool_matches_nested_loop_reference_f32() {
    maxpool_matches_reference::<f32>();
}

#[test]
fn maxpool_matches_nested_loop_reference_f64() {
    maxpool_matches_reference::<f64>();
}
