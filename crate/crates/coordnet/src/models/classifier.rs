//! The digit classifier: conv 5×5×32 → pool 2×2 → conv 5×5×64 → pool 2×2 →
//! dense hidden (ReLU) → dense 10 → softmax. Input is 28×28, single-channel
//! or with the two position channels stacked (3 channels total).

use crate::error::{Error, Result};
use crate::ops::{
    cross_entropy_softmax_backward, maxpool2d, maxpool2d_backward, relu, relu_backward, softmax,
    ConvSpec,
};
use crate::param::Parameter;
use crate::rng::RngState;
use crate::tensor::{Element, Tensor};

use super::layers::{Conv2dLayer, DenseLayer};

pub const INPUT_EXTENT: usize = 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct NetworkSpec {
    /// 1 (grayscale) or 3 (grayscale + XY position channels).
    pub input_channels: usize,
    /// Width of the hidden dense layer.
    pub hidden_width: usize,
    pub class_count: usize,
    /// false → valid convolutions (28→24→12→8→4); true → padded to keep
    /// extents (28→28→14→14→7).
    pub same_padding: bool,
}

impl NetworkSpec {
    pub fn baseline() -> Self {
        NetworkSpec { input_channels: 1, hidden_width: 1024, class_count: 10, same_padding: false }
    }

    pub fn with_coords() -> Self {
        NetworkSpec { input_channels: 3, ..Self::baseline() }
    }

    pub fn for_channels(input_channels: usize) -> Self {
        NetworkSpec { input_channels, ..Self::baseline() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_channels != 1 && self.input_channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "input_channels must be 1 or 3, got {}",
                self.input_channels
            )));
        }
        if self.hidden_width == 0 {
            return Err(Error::InvalidArgument("hidden_width must be positive".into()));
        }
        if self.class_count == 0 {
            return Err(Error::InvalidArgument("class_count must be positive".into()));
        }
        Ok(())
    }

    fn conv_padding(&self) -> usize {
        if self.same_padding {
            2 // (kernel − 1)/2 for the 5×5 kernels
        } else {
            0
        }
    }

    /// Spatial chain from the 28×28 input: conv → pool → conv → pool.
    pub fn spatial_chain(&self) -> Result<[usize; 5]> {
        let c1 = ConvSpec::new(self.input_channels, 32, 5, 1, self.conv_padding())?;
        let e1 = c1.output_extent(INPUT_EXTENT)?;
        let p1 = e1 / 2;
        let c2 = ConvSpec::new(32, 64, 5, 1, self.conv_padding())?;
        let e2 = c2.output_extent(p1)?;
        let p2 = e2 / 2;
        if p1 == 0 || p2 == 0 {
            return Err(Error::shape("spatial_chain", format!("chain collapsed: {e1}→{p1}→{e2}→{p2}")));
        }
        Ok([INPUT_EXTENT, e1, p1, e2, p2])
    }

    /// Flattened feature count feeding the dense head.
    pub fn flat_features(&self) -> Result<usize> {
        let chain = self.spatial_chain()?;
        Ok(64 * chain[4] * chain[4])
    }
}

/// Activations retained by a training-mode forward, consumed by backward.
struct Trace<E: Element> {
    conv1_pre: Tensor<E>,
    pool1_argmax: Vec<usize>,
    relu1_shape: Vec<usize>,
    conv2_pre: Tensor<E>,
    pool2_argmax: Vec<usize>,
    relu2_shape: Vec<usize>,
    pool2_shape: Vec<usize>,
    fc1_pre: Tensor<E>,
    probs: Tensor<E>,
}

pub struct Network<E: Element> {
    pub spec: NetworkSpec,
    pub conv1: Conv2dLayer<E>,
    pub conv2: Conv2dLayer<E>,
    pub fc1: DenseLayer<E>,
    pub fc2: DenseLayer<E>,
    trace: Option<Trace<E>>,
}

/// Seeded construction. Each layer draws from its own derived stream, so
/// layers after the first get identical initial values for the 1- and
/// 3-channel variants.
pub fn build_classifier<E: Element>(spec: NetworkSpec, rng: &RngState) -> Result<Network<E>> {
    spec.validate()?;
    let p = spec.conv_padding();
    let c1 = ConvSpec::new(spec.input_channels, 32, 5, 1, p)?;
    let c2 = ConvSpec::new(32, 64, 5, 1, p)?;
    let flat = spec.flat_features()?;
    let conv1 = Conv2dLayer::new(c1, "conv1", &mut rng.derive("init/conv1", 0));
    let conv2 = Conv2dLayer::new(c2, "conv2", &mut rng.derive("init/conv2", 0));
    let fc1 = DenseLayer::new(flat, spec.hidden_width, "fc1", &mut rng.derive("init/fc1", 0));
    let fc2 = DenseLayer::new(spec.hidden_width, spec.class_count, "fc2", &mut rng.derive("init/fc2", 0));
    Ok(Network { spec, conv1, conv2, fc1, fc2, trace: None })
}

impl<E: Element> Network<E> {
    pub fn parameters(&self) -> Vec<&Parameter<E>> {
        vec![
            &self.conv1.weight,
            &self.conv1.bias,
            &self.conv2.weight,
            &self.conv2.bias,
            &self.fc1.weight,
            &self.fc1.bias,
            &self.fc2.weight,
            &self.fc2.bias,
        ]
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter<E>> {
        vec![
            &mut self.conv1.weight,
            &mut self.conv1.bias,
            &mut self.conv2.weight,
            &mut self.conv2.bias,
            &mut self.fc1.weight,
            &mut self.fc1.bias,
            &mut self.fc2.weight,
            &mut self.fc2.bias,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.parameters().iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in self.parameters_mut() {
            p.zero_grad();
        }
    }

    /// Copies of all parameter values, in declaration order.
    pub fn snapshot(&self) -> Vec<Tensor<E>> {
        self.parameters().iter().map(|p| p.value.clone()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Tensor<E>]) {
        let params = self.parameters_mut();
        assert_eq!(params.len(), snapshot.len(), "snapshot size mismatch");
        for (p, s) in params.into_iter().zip(snapshot) {
            assert_eq!(p.value.shape(), s.shape(), "snapshot shape mismatch for {}", p.name);
            p.value = s.clone();
        }
    }

    fn check_channels(&self, batch: &Tensor<E>) -> Result<usize> {
        match batch.shape() {
            [n, c, h, w] if *c == self.spec.input_channels && *h == INPUT_EXTENT && *w == INPUT_EXTENT => {
                Ok(*n)
            }
            [_, c, ..] if *c != self.spec.input_channels => Err(Error::shape(
                "classifier_forward",
                format!(
                    "batch has {c} channels but the network expects {}; {} coordinate channels",
                    self.spec.input_channels,
                    if self.spec.input_channels == 3 { "enable (append)" } else { "disable" },
                ),
            )),
            s => Err(Error::shape(
                "classifier_forward",
                format!("expected [N,{},28,28], got {s:?}", self.spec.input_channels),
            )),
        }
    }

    /// Forward pass retaining activations for `backward`. Returns class
    /// probabilities [N, class_count].
    pub fn forward_train(&mut self, batch: &Tensor<E>) -> Result<Tensor<E>> {
        let n = self.check_channels(batch)?;
        let conv1_pre = self.conv1.forward(batch, true)?;
        let relu1 = relu(&conv1_pre);
        let (pool1, pool1_argmax) = maxpool2d(&relu1)?;
        let conv2_pre = self.conv2.forward(&pool1, true)?;
        let relu2 = relu(&conv2_pre);
        let (pool2, pool2_argmax) = maxpool2d(&relu2)?;
        let pool2_shape = pool2.shape().to_vec();
        let flat = pool2.reshaped(&[n, self.fc1.in_features()])?;
        let fc1_pre = self.fc1.forward(&flat, true)?;
        let hidden = relu(&fc1_pre);
        let logits = self.fc2.forward(&hidden, true)?;
        let probs = softmax(&logits)?;
        self.trace = Some(Trace {
            conv1_pre,
            pool1_argmax,
            relu1_shape: relu1.shape().to_vec(),
            conv2_pre,
            pool2_argmax,
            relu2_shape: relu2.shape().to_vec(),
            pool2_shape,
            fc1_pre,
            probs: probs.clone(),
        });
        Ok(probs)
    }

    /// Pure forward for inference.
    pub fn forward_eval(&self, batch: &Tensor<E>) -> Result<Tensor<E>> {
        let n = self.check_channels(batch)?;
        let h1 = relu(&self.conv1.forward_ref(batch)?);
        let (p1, _) = maxpool2d(&h1)?;
        let h2 = relu(&self.conv2.forward_ref(&p1)?);
        let (p2, _) = maxpool2d(&h2)?;
        let flat = p2.reshaped(&[n, self.fc1.in_features()])?;
        let hidden = relu(&self.fc1.forward_ref(&flat)?);
        softmax(&self.fc2.forward_ref(&hidden)?)
    }

    /// First-conv activations (post-ReLU), for feature-map inspection.
    pub fn first_layer_maps(&self, batch: &Tensor<E>) -> Result<Tensor<E>> {
        self.check_channels(batch)?;
        Ok(relu(&self.conv1.forward_ref(batch)?))
    }

    /// Accumulates gradients of the mean cross-entropy of the last
    /// `forward_train` output against `labels`.
    pub fn backward(&mut self, labels: &[usize]) -> Result<()> {
        let t = self.trace.take().ok_or_else(|| {
            Error::InvalidArgument("backward without a training-mode forward".into())
        })?;
        let dlogits = cross_entropy_softmax_backward(&t.probs, labels)?;
        let dhidden = self.fc2.backward(&dlogits)?;
        let dfc1 = relu_backward(&dhidden, &t.fc1_pre);
        let dflat = self.fc1.backward(&dfc1)?;
        let dpool2 = dflat.reshaped(&t.pool2_shape)?;
        let drelu2 = maxpool2d_backward(&dpool2, &t.pool2_argmax, &t.relu2_shape)?;
        let dconv2 = relu_backward(&drelu2, &t.conv2_pre);
        let dpool1 = self.conv2.backward(&dconv2)?;
        let drelu1 = maxpool2d_backward(&dpool1, &t.pool1_argmax, &t.relu1_shape)?;
        let dconv1 = relu_backward(&drelu1, &t.conv1_pre);
        self.conv1.backward(&dconv1)?;
        Ok(())
    }
}

/// Class probabilities and argmax labels (ties broken toward the lower class
/// index).
pub fn predict<E: Element>(net: &Network<E>, batch: &Tensor<E>) -> Result<(Tensor<E>, Vec<usize>)> {
    let probs = net.forward_eval(batch)?;
    let m = net.spec.class_count;
    let labels = probs
        .data()
        .chunks_exact(m)
        .map(|row| {
            let mut best = 0usize;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect();
    Ok((probs, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spatial_chain_matches_documented_sizes() {
        let spec = NetworkSpec::baseline();
        assert_eq!(spec.spatial_chain().unwrap(), [28, 24, 12, 8, 4]);
        assert_eq!(spec.flat_features().unwrap(), 1024);
        let same = NetworkSpec { same_padding: true, ..spec };
        assert_eq!(same.spatial_chain().unwrap(), [28, 28, 14, 14, 7]);
        assert_eq!(same.flat_features().unwrap(), 64 * 49);
    }

    #[test]
    fn channel_variants_differ_by_first_conv_only() {
        let rng = RngState::new(3);
        let n1: Network<f32> = build_classifier(NetworkSpec::baseline(), &rng).unwrap();
        let n3: Network<f32> = build_classifier(NetworkSpec::with_coords(), &rng).unwrap();
        assert_eq!(n3.param_count() - n1.param_count(), 2 * 32 * 5 * 5);
        // Later layers start identical thanks to per-layer streams.
        assert_eq!(n1.conv2.weight.value.data(), n3.conv2.weight.value.data());
        assert_eq!(n1.fc1.weight.value.data(), n3.fc1.weight.value.data());
        assert_eq!(n1.fc2.weight.value.data(), n3.fc2.weight.value.data());
    }

    #[test]
    fn zeroed_network_is_uniform() {
        let rng = RngState::new(1);
        let mut net: Network<f64> = build_classifier(NetworkSpec::baseline(), &rng).unwrap();
        for p in net.parameters_mut() {
            p.value.data_mut().fill(0.0);
        }
        let batch = Tensor::zeros(&[2, 1, 28, 28]);
        let probs = net.forward_eval(&batch).unwrap();
        for &v in probs.data() {
            assert!((v - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_shape_and_row_sums() {
        let rng = RngState::new(7);
        let net: Network<f32> = build_classifier(NetworkSpec::baseline(), &rng).unwrap();
        let batch = Tensor::filled(&[7, 1, 28, 28], 0.4f32);
        let (probs, labels) = predict(&net, &batch).unwrap();
        assert_eq!(probs.shape(), &[7, 10]);
        assert_eq!(labels.len(), 7);
        for row in probs.data().chunks_exact(10) {
            let s: f32 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
        // Identical inputs give identical rows.
        let first = &probs.data()[..10];
        for row in probs.data().chunks_exact(10) {
            assert_eq!(row, first);
        }
    }

    #[test]
    fn channel_mismatch_mentions_coordinate_channels() {
        let rng = RngState::new(7);
        let net: Network<f32> = build_classifier(NetworkSpec::baseline(), &rng).unwrap();
        let batch = Tensor::zeros(&[1, 3, 28, 28]);
        let err = net.forward_eval(&batch).unwrap_err();
        assert!(err.to_string().contains("coordinate"), "{err}");
    }

    #[test]
    fn same_padding_variant_runs() {
        let rng = RngState::new(7);
        let spec = NetworkSpec { same_padding: true, ..NetworkSpec::with_coords() };
        let net: Network<f32> = build_classifier(spec, &rng).unwrap();
        let batch = Tensor::filled(&[2, 3, 28, 28], 0.1f32);
        let probs = net.forward_eval(&batch).unwrap();
        assert_eq!(probs.shape(), &[2, 10]);
    }
}
