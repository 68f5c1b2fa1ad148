//! Anomaly scores. All of them are unnormalized log-densities: lower means
//! more anomalous, and only their ordering matters.
//!
//! - reconstruction error: `-½‖x − f(g(x))‖² / σ²_RE`
//! - latent likelihood: `log p_z(g(x))`
//! - proposed (decoder form): `log p_z(z') − log vol J_f(z') − ‖x − x'‖² / (2σ²)`
//!   with `z' = g(x)` (optionally refined) and `x' = f(z')`
//! - proposed (encoder form): `log p_z(g(x')) + log vol J_g(x') − ‖x − x'‖² / (2σ²)`
//!
//! `vol J` is the product of the singular values of the rectangular Jacobian
//! that exceed the rank tolerance. With a vMF prior the latent codes live on
//! the unit sphere, so the Jacobians are restricted to the sphere's tangent
//! space and the volume has `k − 1` factors.

use alloc::vec::Vec;

use rand::Rng;

use crate::linalg::{svd, Matrix};
use crate::math;
use crate::mlp::MlpNetwork;
use crate::rng::{derive_seed, mix64, seeded, stream};
use crate::train::TrainedModel;
use crate::{Error, Result};

/// Relative rank tolerance: `s_i ≤ 1e-9 · s_1` counts as zero.
pub const DEFAULT_RANK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ScoreKind {
    #[cfg_attr(feature = "serde", serde(rename = "re"))]
    ReconstructionError,
    #[cfg_attr(feature = "serde", serde(rename = "pz"))]
    LatentLikelihood,
    #[cfg_attr(feature = "serde", serde(rename = "proposed"))]
    ProposedDecoder,
    #[cfg_attr(feature = "serde", serde(rename = "proposed_enc"))]
    ProposedEncoder,
}

impl ScoreKind {
    pub const ALL: [ScoreKind; 4] = [
        ScoreKind::ReconstructionError,
        ScoreKind::LatentLikelihood,
        ScoreKind::ProposedDecoder,
        ScoreKind::ProposedEncoder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScoreKind::ReconstructionError => "re",
            ScoreKind::LatentLikelihood => "pz",
            ScoreKind::ProposedDecoder => "proposed",
            ScoreKind::ProposedEncoder => "proposed_enc",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    /// CSV column name, `score_<name>`.
    pub fn column(self) -> alloc::string::String {
        alloc::format!("score_{}", self.name())
    }
}

/// Where the residual variance σ² of the proposed scores comes from.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum SigmaSource {
    /// The training β, which plays the role of the observation-noise variance.
    #[default]
    Beta,
    /// The empirical residual variance σ²_RE.
    ResidualVariance,
    Fixed(f64),
}

impl SigmaSource {
    pub fn resolve(self, model: &TrainedModel) -> f64 {
        match self {
            SigmaSource::Beta => model.config.beta,
            SigmaSource::ResidualVariance => model.residual_variance,
            SigmaSource::Fixed(v) => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RefineOptions {
    pub steps: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            steps: 100,
            restarts: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScoreOptions {
    pub sigma: SigmaSource,
    /// When set, `z'` is refined by minimizing `‖f(z) − x‖²` before the decoder-form score.
    pub refine: Option<RefineOptions>,
    pub rank_tolerance: f64,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self {
            sigma: SigmaSource::Beta,
            refine: None,
            rank_tolerance: DEFAULT_RANK_TOLERANCE,
        }
    }
}

/// Singular values of a Jacobian and the log of its volume element.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianFactorization {
    pub jacobian: Matrix,
    /// Descending.
    pub singular_values: Vec<f64>,
    /// `Σ log s_i` over the values above tolerance (at most `expected_rank` of them).
    pub log_volume: f64,
    pub rank: usize,
    pub expected_rank: usize,
}

impl JacobianFactorization {
    pub fn rank_deficient(&self) -> bool {
        self.rank < self.expected_rank
    }
}

/// Pseudo-determinant of a `d × k` Jacobian (`d ≥ k`): values `s_i > tolerance` count.
pub fn pseudo_det(jacobian: &Matrix, tolerance: f64) -> Result<JacobianFactorization> {
    if jacobian.rows() < jacobian.cols() || jacobian.cols() == 0 {
        return Err(Error::invalid("pseudo-determinant needs a d × k matrix with d ≥ k ≥ 1"));
    }
    factorize(jacobian, jacobian.cols(), |_| tolerance)
}

/// Pseudo-determinant keeping at most `expected_rank` values above `rel_tol · s_1`.
pub fn pseudo_det_relative(jacobian: &Matrix, expected_rank: usize, rel_tol: f64) -> Result<JacobianFactorization> {
    factorize(jacobian, expected_rank, |s1| rel_tol * s1)
}

fn factorize(jacobian: &Matrix, expected_rank: usize, tol: impl Fn(f64) -> f64) -> Result<JacobianFactorization> {
    let s = svd(jacobian)?.singular_values;
    let threshold = tol(s.first().copied().unwrap_or(0.0));
    let kept: Vec<f64> = s.iter().copied().filter(|&v| v > threshold).take(expected_rank).collect();
    Ok(JacobianFactorization {
        jacobian: jacobian.clone(),
        log_volume: kept.iter().map(|&v| math::ln(v)).sum(),
        rank: kept.len(),
        singular_values: s,
        expected_rank,
    })
}

/// Exact `∂f/∂z` (d × k) of the decoder.
pub fn decoder_jacobian(decoder: &MlpNetwork, z: &[f64]) -> Result<Matrix> {
    decoder.jacobian(z)
}

/// Decoder Jacobian restricted to the latent manifold (the tangent space of the
/// sphere for vMF priors).
fn decoder_volume(model: &TrainedModel, z: &[f64], rel_tol: f64) -> Result<JacobianFactorization> {
    let j = decoder_jacobian(&model.decoder, z)?;
    let k = z.len();
    if model.spherical() {
        // J (I − z zᵀ) for unit z
        let jz = j.mul_vec(z)?;
        let projected = Matrix::from_fn(j.rows(), k, |r, c| j[(r, c)] - jz[r] * z[c]);
        pseudo_det_relative(&projected, k - 1, rel_tol)
    } else {
        pseudo_det_relative(&j, k, rel_tol)
    }
}

/// Encoder Jacobian (including the sphere projection for vMF priors), transposed to `d × k`.
fn encoder_volume(model: &TrainedModel, x: &[f64], rel_tol: f64) -> Result<JacobianFactorization> {
    let jh = model.encoder.jacobian(x)?;
    let k = jh.rows();
    if model.spherical() {
        let h = model.encoder.eval(x)?;
        let n = math::norm(&h);
        if n == 0.0 {
            return pseudo_det_relative(&Matrix::zeros(x.len(), k), k - 1, rel_tol);
        }
        let z: Vec<f64> = h.iter().map(|v| v / n).collect();
        // (I − z zᵀ) J_h / ‖h‖, then transpose
        let ztj: Vec<f64> = (0..jh.cols()).map(|c| (0..k).map(|r| z[r] * jh[(r, c)]).sum()).collect();
        let jt = Matrix::from_fn(jh.cols(), k, |c, r| (jh[(r, c)] - z[r] * ztj[c]) / n);
        pseudo_det_relative(&jt, k - 1, rel_tol)
    } else {
        pseudo_det_relative(&jh.transpose(), k, rel_tol)
    }
}

/// The three terms of a proposed score and their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposedScore {
    pub total: f64,
    pub log_prior: f64,
    /// Added with a minus sign (decoder form) or plus sign (encoder form).
    pub log_volume: f64,
    /// `−‖x − x'‖² / (2σ²)`, already signed.
    pub residual_term: f64,
    pub rank_deficient: bool,
    /// The latent point the score was evaluated at.
    pub latent: Vec<f64>,
}

pub fn reconstruction_score(model: &TrainedModel, x: &[f64]) -> Result<f64> {
    let z = model.encode(x)?;
    let xr = model.decode(&z)?;
    Ok(-0.5 * math::dist_sq(x, &xr) / model.residual_variance)
}

pub fn latent_score(model: &TrainedModel, x: &[f64]) -> Result<f64> {
    model.prior.log_density(&model.encode(x)?)
}

fn check_sigma(sigma2: f64) -> Result<()> {
    if sigma2 > 0.0 && sigma2.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("residual variance σ² must be positive"))
    }
}

/// Decoder-form score with `z' = g(x)`.
pub fn proposed_score(model: &TrainedModel, x: &[f64], sigma2: f64) -> Result<ProposedScore> {
    let z = model.encode(x)?;
    proposed_score_at(model, x, &z, sigma2, DEFAULT_RANK_TOLERANCE)
}

/// Decoder-form score at a given latent point `z'`.
pub fn proposed_score_at(model: &TrainedModel, x: &[f64], z: &[f64], sigma2: f64, rel_tol: f64) -> Result<ProposedScore> {
    model.check_input(x)?;
    check_sigma(sigma2)?;
    if z.len() != model.latent_dim() {
        return Err(Error::shape("latent point", model.latent_dim(), z.len()));
    }
    let x_manifold = model.decode(z)?;
    let log_prior = model.prior.log_density(z)?;
    let vol = decoder_volume(model, z, rel_tol)?;
    let residual_term = -0.5 * math::dist_sq(x, &x_manifold) / sigma2;
    Ok(ProposedScore {
        total: log_prior - vol.log_volume + residual_term,
        log_prior,
        log_volume: vol.log_volume,
        residual_term,
        rank_deficient: vol.rank_deficient(),
        latent: z.to_vec(),
    })
}

/// Encoder-form score: prior and encoder Jacobian evaluated at `x' = f(g(x))`.
pub fn encoder_variant_score(model: &TrainedModel, x: &[f64], sigma2: f64) -> Result<ProposedScore> {
    encoder_variant_score_with(model, x, sigma2, DEFAULT_RANK_TOLERANCE)
}

fn encoder_variant_score_with(model: &TrainedModel, x: &[f64], sigma2: f64, rel_tol: f64) -> Result<ProposedScore> {
    check_sigma(sigma2)?;
    let x_manifold = model.decode(&model.encode(x)?)?;
    let z = model.encode(&x_manifold)?;
    let log_prior = model.prior.log_density(&z)?;
    let vol = encoder_volume(model, &x_manifold, rel_tol)?;
    let residual_term = -0.5 * math::dist_sq(x, &x_manifold) / sigma2;
    Ok(ProposedScore {
        total: log_prior + vol.log_volume + residual_term,
        log_prior,
        log_volume: vol.log_volume,
        residual_term,
        rank_deficient: vol.rank_deficient(),
        latent: z,
    })
}

fn residual(model: &TrainedModel, x: &[f64], z: &[f64]) -> Result<f64> {
    Ok(math::dist_sq(&model.decode(z)?, x))
}

fn project_latent(model: &TrainedModel, z: &mut [f64]) {
    if model.spherical() {
        let n = math::norm(z);
        if n > 0.0 {
            z.iter_mut().for_each(|v| *v /= n);
        }
    }
}

/// Minimizes `‖f(z) − x‖²` by backtracking gradient descent from `z0` and from
/// `restarts − 1` prior samples; returns the best point found, never worse than `z0`.
pub fn refine_latent<R: Rng + ?Sized>(
    model: &TrainedModel,
    x: &[f64],
    z0: &[f64],
    steps: usize,
    restarts: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    model.check_input(x)?;
    if z0.len() != model.latent_dim() {
        return Err(Error::shape("refine_latent start", model.latent_dim(), z0.len()));
    }
    let mut best = z0.to_vec();
    let mut best_res = residual(model, x, z0)?;
    for r in 0..restarts.max(1) {
        let mut z = if r == 0 {
            z0.to_vec()
        } else {
            model.prior.sample(1, rng)?.into_vec()
        };
        let mut res = residual(model, x, &z)?;
        let mut lr = 0.1;
        'descent: for _ in 0..steps {
            let fz = model.decode(&z)?;
            let j = decoder_jacobian(&model.decoder, &z)?;
            let diff: Vec<f64> = fz.iter().zip(x).map(|(a, b)| a - b).collect();
            let grad: Vec<f64> = (0..z.len())
                .map(|c| 2.0 * (0..diff.len()).map(|r| j[(r, c)] * diff[r]).sum::<f64>())
                .collect();
            if math::norm_sq(&grad) == 0.0 {
                break;
            }
            loop {
                let mut cand: Vec<f64> = z.iter().zip(&grad).map(|(a, g)| a - lr * g).collect();
                project_latent(model, &mut cand);
                let cand_res = residual(model, x, &cand)?;
                if cand_res < res {
                    z = cand;
                    res = cand_res;
                    lr *= 1.5;
                    break;
                }
                lr *= 0.5;
                if lr < 1e-14 {
                    break 'descent;
                }
            }
        }
        if res < best_res {
            best_res = res;
            best = z;
        }
    }
    Ok(best)
}

/// Scores samples with a fixed model and options.
#[derive(Debug, Clone, Copy)]
pub struct Scorer<'a> {
    pub model: &'a TrainedModel,
    pub options: ScoreOptions,
}

impl<'a> Scorer<'a> {
    pub fn new(model: &'a TrainedModel, options: ScoreOptions) -> Self {
        Self { model, options }
    }

    pub fn sigma2(&self) -> f64 {
        self.options.sigma.resolve(self.model)
    }

    /// Latent point for the decoder-form score: `g(x)`, refined when configured.
    pub fn latent_point(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.model.encode(x)?;
        match self.options.refine {
            None => Ok(z),
            Some(opts) => {
                // per-sample stream so results do not depend on evaluation order
                let h = x.iter().fold(0u64, |acc, v| mix64(acc ^ v.to_bits()));
                let mut rng = seeded(derive_seed(opts.seed, stream::REFINE, h));
                refine_latent(self.model, x, &z, opts.steps, opts.restarts, &mut rng)
            }
        }
    }

    pub fn proposed(&self, x: &[f64]) -> Result<ProposedScore> {
        let z = self.latent_point(x)?;
        proposed_score_at(self.model, x, &z, self.sigma2(), self.options.rank_tolerance)
    }

    pub fn proposed_encoder(&self, x: &[f64]) -> Result<ProposedScore> {
        encoder_variant_score_with(self.model, x, self.sigma2(), self.options.rank_tolerance)
    }

    pub fn score(&self, kind: ScoreKind, x: &[f64]) -> Result<f64> {
        match kind {
            ScoreKind::ReconstructionError => reconstruction_score(self.model, x),
            ScoreKind::LatentLikelihood => latent_score(self.model, x),
            ScoreKind::ProposedDecoder => Ok(self.proposed(x)?.total),
            ScoreKind::ProposedEncoder => Ok(self.proposed_encoder(x)?.total),
        }
    }

    pub fn score_rows(&self, kind: ScoreKind, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.model.data_dim() {
            return Err(Error::shape("scored data width", self.model.data_dim(), x.cols()));
        }
        x.row_iter().map(|r| self.score(kind, r)).collect()
    }
}
