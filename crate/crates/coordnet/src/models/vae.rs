//! Convolutional variational autoencoder over the 3-channel stack
//! (image + XY position channels).
//!
//! Encoder: two stride-2 convs (3→bc→2bc, kernel 3, padding 1) with ReLU,
//! then dense heads for mu and logvar. Decoder mirrors it: dense → reshape →
//! 2× upsample → conv → ReLU → 2× upsample → conv → sigmoid, reconstructing
//! all 3 channels in (0,1). Loss is the Bernoulli reconstruction term summed
//! over channels/pixels (batch-averaged) plus beta · KL to a standard normal.

use crate::error::{Error, Result};
use crate::ops::{
    binary_cross_entropy_mean, binary_cross_entropy_with_logits_grad, kl_to_standard_normal, relu,
    relu_backward, sigmoid, upsample2x, upsample2x_backward, ConvSpec,
};
use crate::param::Parameter;
use crate::rng::RngState;
use crate::tensor::{Element, Tensor};

use super::layers::{Conv2dLayer, DenseLayer};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VaeSpec {
    /// Fixed at 3: image plus the two position channels.
    pub input_channels: usize,
    /// Channels out of the first encoder conv; the second doubles this.
    pub base_channels: usize,
    pub latent_dim: usize,
    /// Weight on the KL term.
    pub beta: f64,
    /// Square input extent; must be divisible by 4 (two stride-2 stages).
    pub input_extent: usize,
}

impl Default for VaeSpec {
    fn default() -> Self {
        VaeSpec { input_channels: 3, base_channels: 16, latent_dim: 16, beta: 1.0, input_extent: 28 }
    }
}

impl VaeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "vae input_channels must be 3 (image + XY), got {}",
                self.input_channels
            )));
        }
        if self.base_channels == 0 || self.latent_dim == 0 {
            return Err(Error::InvalidArgument("vae channel/latent sizes must be positive".into()));
        }
        if self.input_extent == 0 || self.input_extent % 4 != 0 {
            return Err(Error::InvalidArgument(format!(
                "vae input extent must be a positive multiple of 4, got {}",
                self.input_extent
            )));
        }
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(Error::InvalidArgument(format!("beta must be ≥ 0, got {}", self.beta)));
        }
        Ok(())
    }

    /// Extent after the two stride-2 stages.
    fn bottleneck_extent(&self) -> usize {
        self.input_extent / 4
    }

    /// Flattened encoder output feeding the latent heads.
    pub fn flat_features(&self) -> usize {
        2 * self.base_channels * self.bottleneck_extent() * self.bottleneck_extent()
    }
}

struct VaeTrace<E: Element> {
    enc1_pre: Tensor<E>,
    enc2_pre: Tensor<E>,
    mu: Tensor<E>,
    logvar: Tensor<E>,
    sigma: Tensor<E>,
    eps: Tensor<E>,
    dec_fc_pre: Tensor<E>,
    dec1_pre: Tensor<E>,
    recon: Tensor<E>,
}

pub struct Vae<E: Element> {
    pub spec: VaeSpec,
    pub enc1: Conv2dLayer<E>,
    pub enc2: Conv2dLayer<E>,
    pub fc_mu: DenseLayer<E>,
    pub fc_logvar: DenseLayer<E>,
    pub dec_fc: DenseLayer<E>,
    pub dec1: Conv2dLayer<E>,
    pub dec2: Conv2dLayer<E>,
    trace: Option<VaeTrace<E>>,
}

pub fn build_vae<E: Element>(spec: VaeSpec, rng: &RngState) -> Result<Vae<E>> {
    spec.validate()?;
    let bc = spec.base_channels;
    let flat = spec.flat_features();
    let enc1 = Conv2dLayer::new(
        ConvSpec::new(spec.input_channels, bc, 3, 2, 1)?,
        "enc1",
        &mut rng.derive("init/enc1", 0),
    );
    let enc2 =
        Conv2dLayer::new(ConvSpec::new(bc, 2 * bc, 3, 2, 1)?, "enc2", &mut rng.derive("init/enc2", 0));
    let fc_mu = DenseLayer::new(flat, spec.latent_dim, "fc_mu", &mut rng.derive("init/fc_mu", 0));
    let fc_logvar =
        DenseLayer::new(flat, spec.latent_dim, "fc_logvar", &mut rng.derive("init/fc_logvar", 0));
    let dec_fc = DenseLayer::new(spec.latent_dim, flat, "dec_fc", &mut rng.derive("init/dec_fc", 0));
    let dec1 =
        Conv2dLayer::new(ConvSpec::new(2 * bc, bc, 3, 1, 1)?, "dec1", &mut rng.derive("init/dec1", 0));
    let dec2 = Conv2dLayer::new(
        ConvSpec::new(bc, spec.input_channels, 3, 1, 1)?,
        "dec2",
        &mut rng.derive("init/dec2", 0),
    );
    Ok(Vae { spec, enc1, enc2, fc_mu, fc_logvar, dec_fc, dec1, dec2, trace: None })
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VaeLoss {
    pub total: f64,
    pub reconstruction: f64,
    pub kl: f64,
}

/// total = reconstruction + beta·KL, all batch-averaged.
pub fn vae_loss<E: Element>(
    recon: &Tensor<E>,
    input: &Tensor<E>,
    mu: &Tensor<E>,
    logvar: &Tensor<E>,
    beta: f64,
) -> Result<VaeLoss> {
    let reconstruction = binary_cross_entropy_mean(recon, input)?;
    let kl = kl_to_standard_normal(mu, logvar)?;
    let total = reconstruction + beta * kl;
    if !total.is_finite() {
        return Err(Error::NonFinite {
            context: format!("vae loss (reconstruction {reconstruction}, kl {kl})"),
        });
    }
    Ok(VaeLoss { total, reconstruction, kl })
}

impl<E: Element> Vae<E> {
    pub fn parameters(&self) -> Vec<&Parameter<E>> {
        vec![
            &self.enc1.weight,
            &self.enc1.bias,
            &self.enc2.weight,
            &self.enc2.bias,
            &self.fc_mu.weight,
            &self.fc_mu.bias,
            &self.fc_logvar.weight,
            &self.fc_logvar.bias,
            &self.dec_fc.weight,
            &self.dec_fc.bias,
            &self.dec1.weight,
            &self.dec1.bias,
            &self.dec2.weight,
            &self.dec2.bias,
        ]
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter<E>> {
        vec![
            &mut self.enc1.weight,
            &mut self.enc1.bias,
            &mut self.enc2.weight,
            &mut self.enc2.bias,
            &mut self.fc_mu.weight,
            &mut self.fc_mu.bias,
            &mut self.fc_logvar.weight,
            &mut self.fc_logvar.bias,
            &mut self.dec_fc.weight,
            &mut self.dec_fc.bias,
            &mut self.dec1.weight,
            &mut self.dec1.bias,
            &mut self.dec2.weight,
            &mut self.dec2.bias,
        ]
    }

    pub fn zero_grads(&mut self) {
        for p in self.parameters_mut() {
            p.zero_grad();
        }
    }

    fn check_batch(&self, batch: &Tensor<E>) -> Result<usize> {
        let e = self.spec.input_extent;
        match batch.shape() {
            [n, c, h, w] if *c == self.spec.input_channels && *h == e && *w == e => Ok(*n),
            s => Err(Error::shape(
                "vae_forward",
                format!("expected [N,{},{e},{e}], got {s:?}", self.spec.input_channels),
            )),
        }
    }

    /// Forward with caller-supplied reparameterization noise eps [N, latent].
    /// Keeping eps explicit makes the pass a deterministic function, which the
    /// finite-difference checks rely on.
    pub fn forward_with_noise(
        &mut self,
        batch: &Tensor<E>,
        eps: &Tensor<E>,
        train: bool,
    ) -> Result<(Tensor<E>, Tensor<E>, Tensor<E>)> {
        let n = self.check_batch(batch)?;
        if eps.shape() != [n, self.spec.latent_dim] {
            return Err(Error::shape(
                "vae_forward",
                format!("eps shape {:?}, expected [{n}, {}]", eps.shape(), self.spec.latent_dim),
            ));
        }
        let bc = self.spec.base_channels;
        let be = self.spec.bottleneck_extent();
        let flat_dim = self.spec.flat_features();

        let enc1_pre = self.enc1.forward(batch, train)?;
        let r1 = relu(&enc1_pre);
        let enc2_pre = self.enc2.forward(&r1, train)?;
        let r2 = relu(&enc2_pre);
        let flat = r2.reshaped(&[n, flat_dim])?;
        let mu = self.fc_mu.forward(&flat, train)?;
        let logvar = self.fc_logvar.forward(&flat, train)?;

        let half = E::from_f64(0.5);
        let sigma = logvar.map(|lv| (lv * half).exp());
        let mut z = mu.clone();
        for ((zv, &s), &e) in z.data_mut().iter_mut().zip(sigma.data()).zip(eps.data()) {
            *zv = *zv + s * e;
        }

        let dec_fc_pre = self.dec_fc.forward(&z, train)?;
        let h = relu(&dec_fc_pre).reshaped(&[n, 2 * bc, be, be])?;
        let u1 = upsample2x(&h)?;
        let dec1_pre = self.dec1.forward(&u1, train)?;
        let c1 = relu(&dec1_pre);
        let u2 = upsample2x(&c1)?;
        let dec2_pre = self.dec2.forward(&u2, train)?;
        let recon = sigmoid(&dec2_pre);

        if train {
            self.trace = Some(VaeTrace {
                enc1_pre,
                enc2_pre,
                mu: mu.clone(),
                logvar: logvar.clone(),
                sigma,
                eps: eps.clone(),
                dec_fc_pre,
                dec1_pre,
                recon: recon.clone(),
            });
        }
        Ok((recon, mu, logvar))
    }

    /// Forward drawing eps from the given stream.
    pub fn forward(
        &mut self,
        batch: &Tensor<E>,
        rng: &mut RngState,
        train: bool,
    ) -> Result<(Tensor<E>, Tensor<E>, Tensor<E>)> {
        let n = self.check_batch(batch)?;
        let eps_data = (0..n * self.spec.latent_dim).map(|_| rng.normal::<E>()).collect();
        let eps = Tensor::from_vec(vec![n, self.spec.latent_dim], eps_data)?;
        self.forward_with_noise(batch, &eps, train)
    }

    /// Accumulates gradients of `vae_loss(recon, target, mu, logvar, beta)`
    /// for the last training-mode forward.
    pub fn backward(&mut self, target: &Tensor<E>) -> Result<()> {
        let t = self.trace.take().ok_or_else(|| {
            Error::InvalidArgument("vae backward without a training-mode forward".into())
        })?;
        let n = self.check_batch(target)?;
        let bc = self.spec.base_channels;
        let be = self.spec.bottleneck_extent();
        let beta = E::from_f64(self.spec.beta);
        let inv_n = E::from_f64(1.0 / n as f64);
        let half = E::from_f64(0.5);

        // Reconstruction term, fused through the output sigmoid.
        let d_dec2_pre = binary_cross_entropy_with_logits_grad(&t.recon, target)?;
        let d_u2 = self.dec2.backward(&d_dec2_pre)?;
        let d_c1 = upsample2x_backward(&d_u2)?;
        let d_dec1_pre = relu_backward(&d_c1, &t.dec1_pre);
        let d_u1 = self.dec1.backward(&d_dec1_pre)?;
        let d_h = upsample2x_backward(&d_u1)?;
        let d_h_flat = d_h.reshaped(&[n, 2 * bc * be * be])?;
        let d_dec_fc = relu_backward(&d_h_flat, &t.dec_fc_pre);
        let d_z = self.dec_fc.backward(&d_dec_fc)?;

        // Through the reparameterization, plus the KL term's own gradients:
        // dKL/dmu = beta·mu/N, dKL/dlogvar = beta·(exp(logvar) − 1)/(2N).
        let mut d_mu = d_z.clone();
        for (g, &m) in d_mu.data_mut().iter_mut().zip(t.mu.data()) {
            *g = *g + beta * m * inv_n;
        }
        let mut d_logvar = Tensor::zeros(t.logvar.shape());
        for (((g, &dz), (&s, &e)), &lv) in d_logvar
            .data_mut()
            .iter_mut()
            .zip(d_z.data())
            .zip(t.sigma.data().iter().zip(t.eps.data()))
            .zip(t.logvar.data())
        {
            *g = dz * e * s * half + beta * half * (lv.exp() - E::one()) * inv_n;
        }

        let d_flat_mu = self.fc_mu.backward(&d_mu)?;
        let d_flat_lv = self.fc_logvar.backward(&d_logvar)?;
        let mut d_flat = d_flat_mu;
        for (a, &b) in d_flat.data_mut().iter_mut().zip(d_flat_lv.data()) {
            *a = *a + b;
        }
        let d_r2 = d_flat.reshaped(t.enc2_pre.shape())?;
        let d_enc2_pre = relu_backward(&d_r2, &t.enc2_pre);
        let d_r1 = self.enc2.backward(&d_enc2_pre)?;
        let d_enc1_pre = relu_backward(&d_r1, &t.enc1_pre);
        self.enc1.backward(&d_enc1_pre)?;
        Ok(())
    }
}

/// Combined position image: recon_x + recon_y, min-max renormalized to
/// [0,1]. A constant sum maps to all zeros.
pub fn joint_position_matrix<E: Element>(
    recon_x: &Tensor<E>,
    recon_y: &Tensor<E>,
) -> Result<Tensor<E>> {
    if recon_x.shape() != recon_y.shape() {
        return Err(Error::shape(
            "joint_position_matrix",
            format!("{:?} vs {:?}", recon_x.shape(), recon_y.shape()),
        ));
    }
    let sum: Vec<f64> = recon_x
        .data()
        .iter()
        .zip(recon_y.data())
        .map(|(&a, &b)| a.to_f64() + b.to_f64())
        .collect();
    let lo = sum.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = sum.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    let data = if range > 0.0 {
        sum.iter().map(|&v| E::from_f64((v - lo) / range)).collect()
    } else {
        vec![E::zero(); sum.len()]
    };
    Tensor::from_vec(recon_x.shape().to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> VaeSpec {
        VaeSpec { base_channels: 2, latent_dim: 3, input_extent: 8, ..VaeSpec::default() }
    }

    #[test]
    fn forward_shapes() {
        let rng = RngState::new(5);
        let mut vae: Vae<f32> = build_vae(tiny_spec(), &rng).unwrap();
        let batch = Tensor::filled(&[2, 3, 8, 8], 0.5f32);
        let mut noise = RngState::new(6);
        let (recon, mu, logvar) = vae.forward(&batch, &mut noise, false).unwrap();
        assert_eq!(recon.shape(), &[2, 3, 8, 8]);
        assert_eq!(mu.shape(), &[2, 3]);
        assert_eq!(logvar.shape(), &[2, 3]);
        assert!(recon.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn kl_zero_for_standard_normal_latent() {
        let mu = Tensor::zeros(&[4, 3]);
        let lv = Tensor::zeros(&[4, 3]);
        let recon = Tensor::filled(&[4, 3, 8, 8], 0.5f64);
        let loss = vae_loss(&recon, &recon, &mu, &lv, 1.0).unwrap();
        assert!(loss.kl.abs() < 1e-12);
        assert!((loss.total - loss.reconstruction).abs() < 1e-12);
    }

    #[test]
    fn beta_zero_drops_kl_and_perfect_recon_hits_entropy_floor() {
        let mu = Tensor::filled(&[1, 3], 2.0f64);
        let lv = Tensor::filled(&[1, 3], 1.0f64);
        let t = Tensor::from_vec(vec![1, 1, 1, 4], vec![0.0, 1.0, 0.25, 0.75]).unwrap();
        let loss = vae_loss(&t, &t, &mu, &lv, 0.0).unwrap();
        let entropy: f64 = [0.25f64, 0.75]
            .iter()
            .map(|&p| -(p * p.ln() + (1.0 - p) * (1.0 - p).ln()))
            .sum();
        assert!((loss.total - entropy).abs() < 1e-5);
        assert!(loss.kl > 0.0, "kl is still reported");
    }

    #[test]
    fn joint_matrix_of_ideal_grids_is_diagonal_ramp() {
        use crate::coords::make_position_grids;
        let g = make_position_grids::<f64>(5, 5).unwrap();
        let joint = joint_position_matrix(&g.x_channel, &g.y_channel).unwrap();
        // (x+y) ranges over [0,2]; renormalized corners: 0 at (0,0), 1 at (4,4).
        assert_eq!(joint.at(&[0, 0]), 0.0);
        assert_eq!(joint.at(&[4, 4]), 1.0);
        assert!((joint.at(&[0, 4]) - 0.5).abs() < 1e-12);
        assert!((joint.at(&[4, 0]) - 0.5).abs() < 1e-12);
        assert!((joint.at(&[2, 2]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn joint_matrix_constant_guard() {
        let a = Tensor::filled(&[3, 3], 0.25f32);
        let b = Tensor::filled(&[3, 3], 0.5f32);
        let joint = joint_position_matrix(&a, &b).unwrap();
        assert!(joint.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn deterministic_under_fixed_noise() {
        let rng = RngState::new(5);
        let mut v1: Vae<f64> = build_vae(tiny_spec(), &rng).unwrap();
        let mut v2: Vae<f64> = build_vae(tiny_spec(), &rng).unwrap();
        let batch = Tensor::filled(&[1, 3, 8, 8], 0.3f64);
        let eps = Tensor::filled(&[1, 3], 0.7f64);
        let (r1, ..) = v1.forward_with_noise(&batch, &eps, false).unwrap();
        let (r2, ..) = v2.forward_with_noise(&batch, &eps, false).unwrap();
        assert_eq!(r1.data(), r2.data());
    }

    #[test]
    fn spec_validation() {
        assert!(tiny_spec().validate().is_ok());
        assert!(VaeSpec { input_extent: 10, ..tiny_spec() }.validate().is_err());
        assert!(VaeSpec { input_channels: 1, ..tiny_spec() }.validate().is_err());
        assert!(VaeSpec { latent_dim: 0, ..tiny_spec() }.validate().is_err());
        assert!(VaeSpec { beta: -1.0, ..tiny_spec() }.validate().is_err());
    }
}
