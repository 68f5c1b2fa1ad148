//! Wasserstein autoencoder training: minimizes
//! `mean ‖x − f(g(x))‖² + β · MMD²(g(X), Z)` with `Z` drawn from the prior,
//! jointly over encoder, decoder and the prior's component locations.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::adam::{AdamConfig, AdamState};
use crate::data::Normalizer;
use crate::linalg::Matrix;
use crate::math;
use crate::mlp::{Activation, MlpNetwork};
use crate::mmd::{mmd2_unbiased, mmd2_unbiased_with_grad};
use crate::prior::{Prior, PriorKind, PriorNoise};
use crate::rng::seeded;
use crate::{Error, Result};

/// Default vMF concentration when none is configured.
pub const DEFAULT_VMF_KAPPA: f64 = 5.0;
/// Default Gaussian component variance when none is configured.
pub const DEFAULT_GAUSSIAN_VARIANCE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub latent_dim: usize,
    pub mixture_components: usize,
    pub prior_kind: PriorKind,
    /// Gaussian component variance or vMF concentration; kind-specific default when unset.
    pub prior_scale: Option<f64>,
    pub kernel_width: f64,
    pub beta: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    pub learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_width: 32,
            hidden_layers: 3,
            latent_dim: 2,
            mixture_components: 1,
            prior_kind: PriorKind::VmfMixture,
            prior_scale: None,
            kernel_width: 1.0,
            beta: 1.0,
            batch_size: 100,
            steps: 10_000,
            seed: 0,
            learning_rate: 1e-3,
        }
    }
}

impl TrainConfig {
    pub fn prior_scale(&self) -> f64 {
        self.prior_scale.unwrap_or(match self.prior_kind {
            PriorKind::VmfMixture => DEFAULT_VMF_KAPPA,
            _ => DEFAULT_GAUSSIAN_VARIANCE,
        })
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            ..AdamConfig::default()
        }
    }

    pub fn validate(&self, data_dim: usize) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if self.latent_dim == 0 || self.latent_dim > data_dim {
            return Err(Error::Config(format!(
                "latent dimension {} must be in 1..={data_dim}",
                self.latent_dim
            )));
        }
        if self.hidden_width == 0 {
            return fail("hidden width must be positive");
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return fail("beta must be positive");
        }
        if !(self.kernel_width > 0.0 && self.kernel_width.is_finite()) {
            return fail("kernel width must be positive");
        }
        if self.batch_size < 2 {
            return fail("batch size must be at least 2");
        }
        if self.mixture_components == 0 {
            return fail("mixture needs at least one component");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning rate must be positive");
        }
        if self.prior_kind == PriorKind::VmfMixture && self.latent_dim < 2 {
            return fail("vMF prior requires latent dimension ≥ 2");
        }
        let s = self.prior_scale();
        if !(s.is_finite() && (s > 0.0 || (s == 0.0 && self.prior_kind == PriorKind::VmfMixture))) {
            return fail("prior scale must be positive");
        }
        Ok(())
    }
}

/// Encoder, decoder and prior after training, plus what scoring needs.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainedModel {
    pub config: TrainConfig,
    pub encoder: MlpNetwork,
    pub decoder: MlpNetwork,
    pub prior: Prior,
    /// Scalar variance of all residual components `x − f(g(x))` on the training set.
    pub residual_variance: f64,
    pub final_loss: f64,
    /// Feature standardization the model was trained under, if any.
    pub normalizer: Option<Normalizer>,
}

impl TrainedModel {
    pub fn data_dim(&self) -> usize {
        self.encoder.in_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.out_dim()
    }

    pub fn spherical(&self) -> bool {
        self.prior.kind().is_spherical()
    }

    /// Checks that encoder, decoder, prior, config and normalizer agree.
    pub fn validate(&self) -> Result<()> {
        let k = self.latent_dim();
        if self.decoder.in_dim() != k {
            return Err(Error::shape("decoder input", k, self.decoder.in_dim()));
        }
        if self.decoder.out_dim() != self.data_dim() {
            return Err(Error::shape("decoder output", self.data_dim(), self.decoder.out_dim()));
        }
        if self.prior.dim() != k || self.config.latent_dim != k {
            return Err(Error::shape("prior dimension", k, self.prior.dim()));
        }
        if self.prior.kind() != self.config.prior_kind {
            return Err(Error::Config("prior kind differs from the configuration".into()));
        }
        if let Some(n) = &self.normalizer {
            if n.dim() != self.data_dim() || n.std.len() != n.dim() || n.std.iter().any(|s| s.is_nan() || *s <= 0.0) {
                return Err(Error::invalid("normalizer does not match the model"));
            }
        }
        if !(self.residual_variance > 0.0 && self.residual_variance.is_finite()) {
            return Err(Error::invalid("residual variance must be positive"));
        }
        Ok(())
    }

    pub fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.data_dim() {
            return Err(Error::shape("model input", self.data_dim(), x.len()));
        }
        Ok(())
    }

    /// `g(x)`; projected onto the unit sphere for vMF priors.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut z = self.encoder.eval(x)?;
        if self.spherical() {
            normalize_in_place(&mut z);
        }
        Ok(z)
    }

    pub fn encode_batch(&self, x: &Matrix) -> Result<Matrix> {
        let mut z = self.encoder.predict(x)?;
        if self.spherical() {
            for i in 0..z.rows() {
                normalize_in_place(z.row_mut(i));
            }
        }
        Ok(z)
    }

    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.decoder.eval(z)
    }

    pub fn reconstruct_batch(&self, x: &Matrix) -> Result<Matrix> {
        self.decoder.predict(&self.encode_batch(x)?)
    }

    /// Residual variance of this model on `x`.
    pub fn residual_variance_on(&self, x: &Matrix) -> Result<f64> {
        let r = x.sub(&self.reconstruct_batch(x)?)?;
        Ok(scalar_variance(r.as_slice()))
    }
}

fn normalize_in_place(z: &mut [f64]) {
    let n = math::norm(z);
    if n > 0.0 {
        z.iter_mut().for_each(|v| *v /= n);
    }
}

/// Population variance of all values, floored at `1e-12`.
pub fn scalar_variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 1e-12;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    var.max(1e-12)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub reconstruction: f64,
    pub mmd: f64,
}

/// WAE loss on `batch` with prior samples drawn from `rng`.
pub fn wae_loss<R: Rng + ?Sized>(
    encoder: &MlpNetwork,
    decoder: &MlpNetwork,
    prior: &Prior,
    batch: &Matrix,
    beta: f64,
    kernel_width: f64,
    rng: &mut R,
) -> Result<f64> {
    let noise = prior.draw_noise(batch.rows(), rng);
    Ok(wae_loss_with_noise(encoder, decoder, prior, batch, &noise, beta, kernel_width)?.total)
}

fn check_batch(encoder: &MlpNetwork, decoder: &MlpNetwork, prior: &Prior, batch: &Matrix) -> Result<()> {
    if batch.rows() < 2 {
        return Err(Error::invalid("WAE loss needs a batch of at least two samples"));
    }
    if encoder.out_dim() != decoder.in_dim() || encoder.out_dim() != prior.dim() {
        return Err(Error::shape("latent dimension", encoder.out_dim(), decoder.in_dim()));
    }
    if decoder.out_dim() != batch.cols() {
        return Err(Error::shape("decoder output", batch.cols(), decoder.out_dim()));
    }
    Ok(())
}

/// WAE loss with fixed prior noise (deterministic in all parameters).
pub fn wae_loss_with_noise(
    encoder: &MlpNetwork,
    decoder: &MlpNetwork,
    prior: &Prior,
    batch: &Matrix,
    noise: &PriorNoise,
    beta: f64,
    kernel_width: f64,
) -> Result<LossParts> {
    check_batch(encoder, decoder, prior, batch)?;
    let mut z = encoder.predict(batch)?;
    if prior.kind().is_spherical() {
        for i in 0..z.rows() {
            normalize_in_place(z.row_mut(i));
        }
    }
    let y = decoder.predict(&z)?;
    let reconstruction = mean_sq_residual(batch, &y);
    let samples = prior.transform(noise)?;
    let mmd = mmd2_unbiased(&z, &samples, kernel_width)?;
    Ok(LossParts {
        total: reconstruction + beta * mmd,
        reconstruction,
        mmd,
    })
}

fn mean_sq_residual(x: &Matrix, y: &Matrix) -> f64 {
    let sum: f64 = x.as_slice().iter().zip(y.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum();
    sum / x.rows() as f64
}

/// WAE loss and its gradient, flattened as encoder ‖ decoder ‖ prior
/// (see [`flatten_params`]).
pub fn wae_loss_grad(
    encoder: &MlpNetwork,
    decoder: &MlpNetwork,
    prior: &Prior,
    batch: &Matrix,
    noise: &PriorNoise,
    beta: f64,
    kernel_width: f64,
) -> Result<(LossParts, Vec<f64>)> {
    check_batch(encoder, decoder, prior, batch)?;
    let n = batch.rows();
    let (h, enc_tape) = encoder.forward(batch)?;
    let spherical = prior.kind().is_spherical();
    let mut z = h.clone();
    let mut norms = vec![1.0; n];
    if spherical {
        for (i, norm) in norms.iter_mut().enumerate() {
            let row = z.row_mut(i);
            *norm = math::norm(row);
            normalize_in_place(row);
        }
    }
    let (y, dec_tape) = decoder.forward(&z)?;
    let reconstruction = mean_sq_residual(batch, &y);

    let scale = 2.0 / n as f64;
    let dy = Matrix::from_fn(n, batch.cols(), |i, j| scale * (y[(i, j)] - batch[(i, j)]));
    let (dec_grads, mut dz) = decoder.backward(&dec_tape, &dy)?;

    let samples = prior.transform(noise)?;
    let (mmd, g_enc, mut g_prior) = mmd2_unbiased_with_grad(&z, &samples, kernel_width)?;
    for (d, g) in dz.as_mut_slice().iter_mut().zip(g_enc.as_slice()) {
        *d += beta * g;
    }
    if spherical {
        // ∂z/∂h for z = h/‖h‖ is (I − z zᵀ)/‖h‖
        for (i, &norm) in norms.iter().enumerate() {
            if norm == 0.0 {
                continue;
            }
            let proj = math::dot(z.row(i), dz.row(i));
            let zi = z.row(i).to_vec();
            for (d, zv) in dz.row_mut(i).iter_mut().zip(zi) {
                *d = (*d - zv * proj) / norm;
            }
        }
    }
    let (enc_grads, _) = encoder.backward(&enc_tape, &dz)?;
    g_prior.as_mut_slice().iter_mut().for_each(|g| *g *= beta);
    let prior_grads = prior.transform_backward(noise, &g_prior)?;

    let mut grad = Vec::with_capacity(encoder.num_params() + decoder.num_params() + prior.num_params());
    enc_grads.flatten_into(&mut grad);
    dec_grads.flatten_into(&mut grad);
    grad.extend_from_slice(&prior_grads);
    Ok((
        LossParts {
            total: reconstruction + beta * mmd,
            reconstruction,
            mmd,
        },
        grad,
    ))
}

/// Encoder ‖ decoder ‖ prior parameters.
pub fn flatten_params(encoder: &MlpNetwork, decoder: &MlpNetwork, prior: &Prior) -> Vec<f64> {
    let mut p = Vec::with_capacity(encoder.num_params() + decoder.num_params() + prior.num_params());
    encoder.write_params(&mut p);
    decoder.write_params(&mut p);
    prior.write_params(&mut p);
    p
}

pub fn unflatten_params(encoder: &mut MlpNetwork, decoder: &mut MlpNetwork, prior: &mut Prior, params: &[f64]) -> Result<()> {
    let mut off = encoder.read_params(params)?;
    off += decoder.read_params(&params[off..])?;
    off += prior.read_params(&params[off..])?;
    if off != params.len() {
        return Err(Error::shape("unflatten_params", off, params.len()));
    }
    Ok(())
}

/// Freshly initialized encoder, decoder and prior for `config` on `data_dim` features.
pub fn init_model<R: Rng + ?Sized>(config: &TrainConfig, data_dim: usize, rng: &mut R) -> Result<(MlpNetwork, MlpNetwork, Prior)> {
    config.validate(data_dim)?;
    let hidden = vec![config.hidden_width; config.hidden_layers];
    let encoder = MlpNetwork::init(data_dim, &hidden, config.latent_dim, Activation::Swish, Activation::Linear, rng)?;
    let decoder = MlpNetwork::init(config.latent_dim, &hidden, data_dim, Activation::Swish, Activation::Linear, rng)?;
    let prior = Prior::init(
        config.prior_kind,
        config.latent_dim,
        config.mixture_components,
        config.prior_scale(),
        rng,
    )?;
    Ok((encoder, decoder, prior))
}

/// Trains with ADAM on uniformly drawn mini-batches (with replacement).
/// Deterministic given `config.seed`.
pub fn train(config: &TrainConfig, data: &Matrix) -> Result<TrainedModel> {
    train_with_observer(config, data, |_, _| {})
}

/// Like [`train`], calling `observe(step, loss)` after every step.
pub fn train_with_observer(
    config: &TrainConfig,
    data: &Matrix,
    mut observe: impl FnMut(usize, &LossParts),
) -> Result<TrainedModel> {
    let (n, d) = data.shape();
    config.validate(d)?;
    if n < config.batch_size {
        return Err(Error::invalid(format!(
            "training set has {n} rows, fewer than the batch size {}",
            config.batch_size
        )));
    }
    data.ensure_finite("training data")?;
    let mut rng = seeded(config.seed);
    let (mut encoder, mut decoder, mut prior) = init_model(config, d, &mut rng)?;
    let mut params = flatten_params(&encoder, &decoder, &prior);
    let mut adam = AdamState::new(config.adam(), params.len());
    let prior_offset = encoder.num_params() + decoder.num_params();

    let mut indices = vec![0usize; config.batch_size];
    let mut recent = Vec::with_capacity(100);
    for step in 0..config.steps {
        indices.iter_mut().for_each(|i| *i = rng.random_range(0..n));
        let batch = data.select_rows(&indices);
        let noise = prior.draw_noise(config.batch_size, &mut rng);
        let (loss, grad) = wae_loss_grad(&encoder, &decoder, &prior, &batch, &noise, config.beta, config.kernel_width)?;
        if !loss.total.is_finite() || !grad.iter().all(|g| g.is_finite()) {
            return Err(Error::TrainingDiverged { step, loss: loss.total });
        }
        observe(step, &loss);
        if recent.len() == 100 {
            recent.remove(0);
        }
        recent.push(loss.total);
        adam.step(&mut params, &grad)?;
        unflatten_params(&mut encoder, &mut decoder, &mut prior, &params)?;
        if prior.kind().is_spherical() {
            prior.project();
            let mut projected = Vec::with_capacity(prior.num_params());
            prior.write_params(&mut projected);
            params[prior_offset..].copy_from_slice(&projected);
        }
    }

    let final_loss = if recent.is_empty() {
        let m = config.batch_size.min(n);
        let idx: Vec<usize> = (0..m).collect();
        let noise = prior.draw_noise(m, &mut rng);
        wae_loss_with_noise(&encoder, &decoder, &prior, &data.select_rows(&idx), &noise, config.beta, config.kernel_width)?.total
    } else {
        recent.iter().sum::<f64>() / recent.len() as f64
    };

    let mut model = TrainedModel {
        config: config.clone(),
        encoder,
        decoder,
        prior,
        residual_variance: 0.0,
        final_loss,
        normalizer: None,
    };
    model.residual_variance = model.residual_variance_on(data)?;
    Ok(model)
}
