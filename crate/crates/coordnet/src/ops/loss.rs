//! Classification and reconstruction losses.
//!
//! Loss *values* are accumulated in f64 in a fixed order regardless of the
//! tensor element type, so reported numbers are reproducible and finite-
//! difference checks have a stable scalar to probe. Loss *gradients* are
//! produced in the tensor's element type.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Probabilities are clamped to [CLAMP_EPS, 1−CLAMP_EPS] inside logs.
pub const CLAMP_EPS: f64 = 1e-7;

fn class_dims(probs: &Tensor<impl Element>, op: &'static str) -> Result<(usize, usize)> {
    match probs.shape() {
        [n, m] => Ok((*n, *m)),
        s => Err(Error::shape(op, format!("expected [N,M] probabilities, got {s:?}"))),
    }
}

/// Mean negative log-likelihood of the labels under row-stochastic `probs`.
pub fn cross_entropy<E: Element>(probs: &Tensor<E>, labels: &[usize]) -> Result<f64> {
    let (n, m) = class_dims(probs, "cross_entropy")?;
    if labels.len() != n {
        return Err(Error::shape(
            "cross_entropy",
            format!("{} labels for {n} rows", labels.len()),
        ));
    }
    let mut total = 0.0f64;
    for (row, &label) in probs.data().chunks_exact(m).zip(labels) {
        if label >= m {
            return Err(Error::InvalidArgument(format!(
                "label {label} out of range for {m} classes"
            )));
        }
        let p = row[label].to_f64().clamp(CLAMP_EPS, 1.0);
        total -= p.ln();
    }
    Ok(total / n as f64)
}

/// Gradient of `cross_entropy(softmax(logits), labels)` with respect to the
/// logits: (probs − one_hot)/N. Fusing through the softmax keeps the
/// expression exact and free of clamping artifacts.
pub fn cross_entropy_softmax_backward<E: Element>(
    probs: &Tensor<E>,
    labels: &[usize],
) -> Result<Tensor<E>> {
    let (n, m) = class_dims(probs, "cross_entropy_softmax_backward")?;
    if labels.len() != n {
        return Err(Error::shape(
            "cross_entropy_softmax_backward",
            format!("{} labels for {n} rows", labels.len()),
        ));
    }
    let inv_n = E::from_f64(1.0 / n as f64);
    let mut grad = probs.data().to_vec();
    for (i, (&label, row)) in labels.iter().zip(grad.chunks_exact_mut(m)).enumerate() {
        if label >= m {
            return Err(Error::InvalidArgument(format!(
                "label {label} at row {i} out of range for {m} classes"
            )));
        }
        row[label] = row[label] - E::one();
        for v in row.iter_mut() {
            *v = *v * inv_n;
        }
    }
    Tensor::from_vec(vec![n, m], grad)
}

/// Bernoulli reconstruction loss: −Σ[t·ln r + (1−t)·ln(1−r)] summed over all
/// channels and pixels of each sample, averaged over the batch (leading
/// axis). Logs are clamped.
pub fn binary_cross_entropy_mean<E: Element>(recon: &Tensor<E>, target: &Tensor<E>) -> Result<f64> {
    if recon.shape() != target.shape() {
        return Err(Error::shape(
            "binary_cross_entropy",
            format!("recon {:?} vs target {:?}", recon.shape(), target.shape()),
        ));
    }
    if recon.ndim() == 0 || recon.shape()[0] == 0 {
        return Err(Error::shape("binary_cross_entropy", "empty batch"));
    }
    let n = recon.shape()[0] as f64;
    let mut total = 0.0f64;
    for (&r, &t) in recon.data().iter().zip(target.data()) {
        let r = r.to_f64().clamp(CLAMP_EPS, 1.0 - CLAMP_EPS);
        let t = t.to_f64();
        total -= t * r.ln() + (1.0 - t) * (1.0 - r).ln();
    }
    Ok(total / n)
}

/// Gradient of `binary_cross_entropy_mean(sigmoid(logits), target)` with
/// respect to the logits: (sigmoid(logits) − target)/N. Takes the already-
/// computed sigmoid output. Exact — no clamping enters the gradient.
pub fn binary_cross_entropy_with_logits_grad<E: Element>(
    sigmoid_out: &Tensor<E>,
    target: &Tensor<E>,
) -> Result<Tensor<E>> {
    if sigmoid_out.shape() != target.shape() {
        return Err(Error::shape(
            "binary_cross_entropy_grad",
            format!("recon {:?} vs target {:?}", sigmoid_out.shape(), target.shape()),
        ));
    }
    let n = sigmoid_out.shape()[0];
    let inv_n = E::from_f64(1.0 / n as f64);
    let data = sigmoid_out
        .data()
        .iter()
        .zip(target.data())
        .map(|(&r, &t)| (r - t) * inv_n)
        .collect();
    Tensor::from_vec(sigmoid_out.shape().to_vec(), data)
}

/// KL divergence of N(mu, exp(logvar)) from N(0, I), summed over the latent
/// axis and averaged over the batch:
/// −0.5·Σ(1 + logvar − mu² − exp(logvar)) / N.
pub fn kl_to_standard_normal<E: Element>(mu: &Tensor<E>, logvar: &Tensor<E>) -> Result<f64> {
    if mu.shape() != logvar.shape() {
        return Err(Error::shape(
            "kl_to_standard_normal",
            format!("mu {:?} vs logvar {:?}", mu.shape(), logvar.shape()),
        ));
    }
    let (n, _) = class_dims(mu, "kl_to_standard_normal")?;
    let mut total = 0.0f64;
    for (&m, &lv) in mu.data().iter().zip(logvar.data()) {
        let m = m.to_f64();
        let lv = lv.to_f64();
        total += -0.5 * (1.0 + lv - m * m - lv.exp());
    }
    Ok(total / n as f64)
}
