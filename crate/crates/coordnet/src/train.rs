//! Seeded mini-batch training with validation-based early stopping, plus
//! metric evaluation.

use crate::coords::append_coords_batch;
use crate::data::{DatasetSplit, CLASS_COUNT};
use crate::error::{Error, Result};
use crate::models::{Network, Vae};
use crate::ops::cross_entropy;
use crate::optim::{Optimizer, OptimizerKind};
use crate::rng::RngState;
use crate::tensor::{Dtype, Element, Tensor};

pub const EVAL_BATCH: usize = 256;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Stack XY position channels onto every batch before the forward pass.
    pub use_coords: bool,
    /// Numeric width; must agree with the element type actually in use.
    pub precision: Dtype2,
    /// Early stop after this many epochs without a validation-accuracy
    /// improvement; 0 disables early stopping.
    pub patience: usize,
    /// Where to write the final (best-validation) checkpoint, if anywhere.
    pub checkpoint_path: Option<std::path::PathBuf>,
}

/// Serializable twin of `tensor::Dtype` ("f32"/"f64" in configs/reports).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Dtype2 {
    #[serde(rename = "f32")]
    F32,
    #[serde(rename = "f64")]
    F64,
}

impl From<Dtype> for Dtype2 {
    fn from(d: Dtype) -> Self {
        match d {
            Dtype::F32 => Dtype2::F32,
            Dtype::F64 => Dtype2::F64,
        }
    }
}

impl TrainConfig {
    pub fn desk_default(seed: u64, use_coords: bool) -> Self {
        TrainConfig {
            epochs: 3,
            batch_size: 64,
            lr: 1e-3,
            optimizer: OptimizerKind::Adam,
            seed,
            use_coords,
            precision: Dtype2::F32,
            patience: 5,
            checkpoint_path: None,
        }
    }

    pub fn validate(&self, train_len: usize) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        if self.batch_size > train_len {
            return Err(Error::InvalidArgument(format!(
                "batch_size {} exceeds training set size {train_len}",
                self.batch_size
            )));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidArgument(format!("learning rate must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Metrics {
    /// correct / total.
    pub accuracy: f64,
    /// Exactly 1 − accuracy.
    pub error_rate: f64,
    /// Mean per-sample cross-entropy.
    pub loss: f64,
    pub per_class_accuracy: Vec<f64>,
    pub per_class_correct: Vec<u64>,
    pub per_class_total: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean over the epoch's batch losses.
    pub train_loss: f64,
    pub val: Metrics,
}

/// Stacks coordinate channels when requested.
fn prepare_batch<E: Element>(images: Tensor<E>, use_coords: bool) -> Result<Tensor<E>> {
    if use_coords {
        append_coords_batch(&images)
    } else {
        Ok(images)
    }
}

/// Deterministic full-split evaluation.
pub fn evaluate<E: Element>(
    net: &Network<E>,
    split: &DatasetSplit<E>,
    use_coords: bool,
) -> Result<Metrics> {
    if split.is_empty() {
        return Err(Error::Data(format!("evaluate: split '{}' is empty", split.name)));
    }
    let n = split.len();
    let mut correct = 0u64;
    let mut loss_sum = 0.0f64;
    let mut per_class_correct = vec![0u64; CLASS_COUNT];
    let mut per_class_total = vec![0u64; CLASS_COUNT];
    let mut start = 0usize;
    while start < n {
        let end = (start + EVAL_BATCH).min(n);
        let indices: Vec<usize> = (start..end).collect();
        let (images, labels) = split.gather(&indices)?;
        let x = prepare_batch(images, use_coords)?;
        let probs = net.forward_eval(&x)?;
        loss_sum += cross_entropy(&probs, &labels)? * labels.len() as f64;
        let m = probs.shape()[1];
        for (row, &label) in probs.data().chunks_exact(m).zip(&labels) {
            let mut best = 0usize;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            per_class_total[label] += 1;
            if best == label {
                correct += 1;
                per_class_correct[label] += 1;
            }
        }
        start = end;
    }
    let accuracy = correct as f64 / n as f64;
    let per_class_accuracy = per_class_correct
        .iter()
        .zip(&per_class_total)
        .map(|(&c, &t)| if t == 0 { 0.0 } else { c as f64 / t as f64 })
        .collect();
    Ok(Metrics {
        accuracy,
        error_rate: 1.0 - accuracy,
        loss: loss_sum / n as f64,
        per_class_accuracy,
        per_class_correct,
        per_class_total,
    })
}

/// Trains `net` in place; returns per-epoch history. The batch order for
/// epoch k comes from the derived stream ("batch-order", k) of the run seed,
/// so it is identical across runs and across model variants sharing a seed.
/// After the final epoch the best-validation parameters are restored.
pub fn train<E: Element>(
    net: &mut Network<E>,
    train_split: &DatasetSplit<E>,
    val_split: &DatasetSplit<E>,
    config: &TrainConfig,
) -> Result<Vec<EpochRecord>> {
    config.validate(train_split.len())?;
    let expected_channels = if config.use_coords { 3 } else { 1 };
    if net.spec.input_channels != expected_channels {
        return Err(Error::InvalidArgument(format!(
            "network expects {} input channels but use_coords={} implies {}",
            net.spec.input_channels, config.use_coords, expected_channels
        )));
    }
    if Dtype2::from(E::DTYPE) != config.precision {
        return Err(Error::InvalidArgument(
            "config precision does not match the element type in use".into(),
        ));
    }
    if val_split.is_empty() {
        return Err(Error::Data("validation split is empty".into()));
    }

    let root = RngState::new(config.seed);
    let mut opt = Optimizer::new(config.optimizer, config.lr);
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, Vec<Tensor<E>>)> = None;
    let mut stale_epochs = 0usize;
    let n = train_split.len();

    for epoch in 0..config.epochs {
        let order = root.derive("batch-order", epoch as u64).permutation(n);
        let mut batch_losses = 0.0f64;
        let mut batch_count = 0usize;
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let (images, labels) = train_split.gather(chunk)?;
            let x = prepare_batch(images, config.use_coords)?;
            let probs = net.forward_train(&x)?;
            let loss = cross_entropy(&probs, &labels)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("training loss at epoch {epoch}, batch {batch_idx}"),
                });
            }
            batch_losses += loss;
            batch_count += 1;
            net.zero_grads();
            net.backward(&labels)?;
            opt.step(&mut net.parameters_mut())?;
        }
        let val = evaluate(net, val_split, config.use_coords)?;
        let train_loss = batch_losses / batch_count as f64;
        history.push(EpochRecord { epoch, train_loss, val: val.clone() });

        let improved = best.as_ref().map_or(true, |(acc, _)| val.accuracy > *acc);
        if improved {
            best = Some((val.accuracy, net.snapshot()));
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if config.patience > 0 && stale_epochs >= config.patience {
                break;
            }
        }
    }

    if let Some((_, snapshot)) = &best {
        net.restore(snapshot);
    }
    if let Some(path) = &config.checkpoint_path {
        crate::checkpoint::save_checkpoint(net, path)?;
    }
    Ok(history)
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VaeEpochRecord {
    pub epoch: usize,
    pub total: f64,
    pub reconstruction: f64,
    pub kl: f64,
}

/// VAE training over the 3-channel stack (coords always appended). Noise for
/// the reparameterization comes from a per-epoch derived stream. No early
/// stopping — the loss itself is the monitored quantity.
pub fn train_vae<E: Element>(
    vae: &mut Vae<E>,
    train_split: &DatasetSplit<E>,
    config: &TrainConfig,
) -> Result<Vec<VaeEpochRecord>> {
    config.validate(train_split.len())?;
    let root = RngState::new(config.seed);
    let mut opt = Optimizer::new(config.optimizer, config.lr);
    let mut history = Vec::with_capacity(config.epochs);
    let n = train_split.len();
    let beta = vae.spec.beta;

    for epoch in 0..config.epochs {
        let order = root.derive("batch-order", epoch as u64).permutation(n);
        let mut noise = root.derive("vae-noise", epoch as u64);
        let (mut tot, mut rec, mut kl) = (0.0f64, 0.0f64, 0.0f64);
        let mut batch_count = 0usize;
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let (images, _) = train_split.gather(chunk)?;
            let x = append_coords_batch(&images)?;
            let (recon, mu, logvar) = vae.forward(&x, &mut noise, true)?;
            let loss = crate::models::vae_loss(&recon, &x, &mu, &logvar, beta).map_err(|e| match e {
                Error::NonFinite { context } => Error::NonFinite {
                    context: format!("{context} at epoch {epoch}, batch {batch_idx}"),
                },
                other => other,
            })?;
            tot += loss.total;
            rec += loss.reconstruction;
            kl += loss.kl;
            batch_count += 1;
            vae.zero_grads();
            vae.backward(&x)?;
            opt.step(&mut vae.parameters_mut())?;
        }
        let c = batch_count as f64;
        history.push(VaeEpochRecord {
            epoch,
            total: tot / c,
            reconstruction: rec / c,
            kl: kl / c,
        });
    }
    Ok(history)
}
