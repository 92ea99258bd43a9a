//! First-convolution feature-map dumps: one normalized grayscale image per
//! filter, per-filter activation variance over the sample batch, and the
//! count of maps whose variance falls under a blankness threshold.

use std::path::Path;

use coordnet::models::Network;
use coordnet::{Element, Error, Result, Tensor};
use serde::{Deserialize, Serialize};

use crate::imgexport::{min_max_normalize, write_grayscale_png};

/// Layers the dump knows how to read activations from.
pub const DUMPABLE_LAYERS: [&str; 1] = ["conv1"];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureMapDump {
    pub layer: String,
    pub filter_count: usize,
    /// Per-filter activation variance across every sample and position.
    pub variances: Vec<f64>,
    /// Filters with variance < tau.
    pub blank_count: usize,
    pub tau: f64,
    /// File names written under the output directory, one per filter.
    pub images: Vec<String>,
}

/// Runs `samples` (already channel-matched to the network) through the first
/// convolution and writes one min-max-normalized PNG per filter, rendered
/// from the first sample. Variance is taken over the whole batch, so a
/// filter counts as blank only if it is flat for every sample.
pub fn dump_feature_maps<E: Element>(
    net: &Network<E>,
    samples: &Tensor<E>,
    layer: &str,
    tau: f64,
    out_dir: &Path,
) -> Result<FeatureMapDump> {
    if !DUMPABLE_LAYERS.contains(&layer) {
        return Err(Error::InvalidArgument(format!(
            "unknown layer '{layer}'; feature maps are available for: {}",
            DUMPABLE_LAYERS.join(", ")
        )));
    }
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be ≥ 0, got {tau}")));
    }
    let maps = net.first_layer_maps(samples)?;
    let (n, f, h, w) = match maps.shape() {
        [n, f, h, w] => (*n, *f, *h, *w),
        s => return Err(Error::shape("dump_feature_maps", format!("{s:?}"))),
    };
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let plane = h * w;
    let mut variances = Vec::with_capacity(f);
    let mut images = Vec::with_capacity(f);
    for filter in 0..f {
        // Two-pass variance in f64 over all samples' activations.
        let values = (0..n).flat_map(|s| {
            let base = (s * f + filter) * plane;
            maps.data()[base..base + plane].iter().map(|&v| v.to_f64())
        });
        let count = (n * plane) as f64;
        let mean: f64 = values.clone().sum::<f64>() / count;
        let var: f64 = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / count;
        variances.push(var);

        let first = Tensor::from_vec(vec![h, w], maps.data()[filter * plane..][..plane].to_vec())?;
        let name = format!("{layer}-filter{filter:02}.png");
        write_grayscale_png(&min_max_normalize(&first), &out_dir.join(&name))?;
        images.push(name);
    }
    let blank_count = variances.iter().filter(|&&v| v < tau).count();
    Ok(FeatureMapDump {
        layer: layer.to_string(),
        filter_count: f,
        variances,
        blank_count,
        tau,
        images,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use coordnet::models::{build_classifier, NetworkSpec};
    use coordnet::rng::RngState;

    fn sample_batch(n: usize) -> Tensor<f32> {
        let mut rng = RngState::new(77);
        let data = (0..n * 28 * 28).map(|_| rng.below(256) as f32 / 255.0).collect();
        Tensor::from_vec(vec![n, 1, 28, 28], data).unwrap()
    }

    #[test]
    fn zero_weights_make_every_map_blank() {
        let rng = RngState::new(1);
        let mut net = build_classifier::<f32>(NetworkSpec::baseline(), &rng).unwrap();
        net.conv1.weight.value.data_mut().fill(0.0);
        net.conv1.bias.value.data_mut().fill(0.0);
        let dir = tempfile::tempdir().unwrap();
        let dump = dump_feature_maps(&net, &sample_batch(4), "conv1", 1e-6, dir.path()).unwrap();
        assert_eq!(dump.filter_count, 32);
        assert_eq!(dump.blank_count, 32);
        assert_eq!(dump.images.len(), 32);
        assert!(dump.variances.iter().all(|&v| v == 0.0));
        for name in &dump.images {
            assert!(dir.path().join(name).exists());
        }
    }

    #[test]
    fn single_live_filter_leaves_the_rest_blank() {
        let rng = RngState::new(2);
        let mut net = build_classifier::<f32>(NetworkSpec::baseline(), &rng).unwrap();
        net.conv1.weight.value.data_mut().fill(0.0);
        net.conv1.bias.value.data_mut().fill(0.0);
        // Filter 5 becomes a center-tap identity; its map follows the input.
        let k = 5 * 1 * 5 * 5 + 2 * 5 + 2;
        net.conv1.weight.value.data_mut()[k] = 1.0;
        let dir = tempfile::tempdir().unwrap();
        let dump = dump_feature_maps(&net, &sample_batch(4), "conv1", 1e-6, dir.path()).unwrap();
        assert_eq!(dump.blank_count, 31);
        assert!(dump.variances[5] > 1e-6);
    }

    #[test]
    fn unknown_layer_error_lists_the_options() {
        let rng = RngState::new(3);
        let net = build_classifier::<f32>(NetworkSpec::baseline(), &rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let err = dump_feature_maps(&net, &sample_batch(1), "conv9", 1e-6, dir.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("conv9") && msg.contains("conv1"), "{msg}");
    }

    #[test]
    fn trained_variance_is_nonnegative_and_blank_count_bounded() {
        let rng = RngState::new(4);
        let net = build_classifier::<f32>(NetworkSpec::baseline(), &rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let dump = dump_feature_maps(&net, &sample_batch(2), "conv1", 1e-6, dir.path()).unwrap();
        assert!(dump.blank_count <= dump.filter_count);
        assert!(dump.variances.iter().all(|&v| v >= 0.0));
    }
}
