//! Low-level differentiable operations: convolution, pooling, dense affine
//! maps, activations, losses, and nearest-neighbor upsampling.
//!
//! Every op comes as a `*_forward` plus a matching `*_backward` that maps the
//! upstream gradient to input/parameter gradients. Inputs are immutable;
//! backward never mutates saved activations. All ops are single-threaded and
//! reduce in a fixed order, so results are bit-stable for fixed inputs.

mod activation;
mod conv;
mod dense;
mod loss;
mod pool;
mod upsample;

pub use activation::{relu, relu_backward, sigmoid, sigmoid_backward, softmax};
pub use conv::{conv2d_backward, conv2d_forward};
pub use dense::{dense_backward, dense_forward};
pub use loss::{
    binary_cross_entropy_mean, binary_cross_entropy_with_logits_grad, cross_entropy,
    cross_entropy_softmax_backward, kl_to_standard_normal, CLAMP_EPS,
};
pub use pool::{maxpool2d, maxpool2d_backward};
pub use upsample::{upsample2x, upsample2x_backward};

use crate::error::{Error, Result};

/// Geometry of one 2-D convolution. Kernels are square; padding is a
/// symmetric zero border (0 = valid).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvSpec {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0 {
            return Err(Error::InvalidArgument(format!(
                "conv spec fields must be positive: in={in_channels} out={out_channels} \
                 kernel={kernel} stride={stride}"
            )));
        }
        Ok(ConvSpec { in_channels, out_channels, kernel, stride, padding })
    }

    /// Output extent along one spatial axis:
    /// floor((n + 2·padding − kernel)/stride) + 1, which must be ≥ 1.
    pub fn output_extent(&self, input: usize) -> Result<usize> {
        let padded = input + 2 * self.padding;
        if padded < self.kernel {
            return Err(Error::shape(
                "conv2d",
                format!(
                    "input extent {input} with padding {} is smaller than kernel {}",
                    self.padding, self.kernel
                ),
            ));
        }
        Ok((padded - self.kernel) / self.stride + 1)
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kernel, self.kernel]
    }
}

/// Step count for a stack of stride-`s`, kernel-`k` convolutions to cover an
/// input extent of `n`: floor((n − s) / k).
///
/// This is a coarse counting rule, not the exact receptive-field recurrence
/// (which grows by (k−1)·s_effective per layer); it is kept in this exact
/// form because downstream sizing decisions were made against it.
pub fn steps_to_global(n: u64, s: u64, k: u64) -> Result<u64> {
    if s < 1 || k < 1 {
        return Err(Error::InvalidArgument(format!(
            "stride and kernel must be ≥ 1 (got s={s}, k={k})"
        )));
    }
    if n <= s {
        return Err(Error::InvalidArgument(format!(
            "extent n must exceed stride s (got n={n}, s={s})"
        )));
    }
    Ok((n - s) / k)
}

/// Shape helper: accept [C,H,W] or [N,C,H,W], return (n, c, h, w, batched).
pub(crate) fn as_nchw(shape: &[usize], op: &'static str) -> Result<(usize, usize, usize, usize, bool)> {
    match shape {
        [c, h, w] => Ok((1, *c, *h, *w, false)),
        [n, c, h, w] => Ok((*n, *c, *h, *w, true)),
        s => Err(Error::shape(op, format!("expected [C,H,W] or [N,C,H,W], got {s:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steps_to_global_known_values() {
        assert_eq!(steps_to_global(28, 1, 5).unwrap(), 5);
        assert_eq!(steps_to_global(28, 2, 5).unwrap(), 5);
        assert_eq!(steps_to_global(32, 1, 5).unwrap(), 6);
    }

    #[test]
    fn steps_to_global_rejects_bad_inputs() {
        assert!(steps_to_global(28, 0, 5).is_err());
        assert!(steps_to_global(28, 1, 0).is_err());
        assert!(steps_to_global(5, 5, 3).is_err());
        assert!(steps_to_global(4, 5, 3).is_err());
    }

    #[test]
    fn conv_spec_output_extent() {
        let s = ConvSpec::new(1, 1, 5, 1, 0).unwrap();
        assert_eq!(s.output_extent(28).unwrap(), 24);
        let s = ConvSpec::new(1, 1, 3, 2, 1).unwrap();
        assert_eq!(s.output_extent(28).unwrap(), 14);
        assert_eq!(s.output_extent(14).unwrap(), 7);
        let s = ConvSpec::new(1, 1, 5, 1, 2).unwrap();
        assert_eq!(s.output_extent(28).unwrap(), 28);
        // Kernel larger than padded input is rejected.
        let s = ConvSpec::new(1, 1, 7, 1, 0).unwrap();
        assert!(s.output_extent(5).is_err());
    }

    #[test]
    fn conv_spec_rejects_zero_fields() {
        assert!(ConvSpec::new(0, 1, 1, 1, 0).is_err());
        assert!(ConvSpec::new(1, 0, 1, 1, 0).is_err());
        assert!(ConvSpec::new(1, 1, 0, 1, 0).is_err());
        assert!(ConvSpec::new(1, 1, 1, 0, 0).is_err());
    }
}
