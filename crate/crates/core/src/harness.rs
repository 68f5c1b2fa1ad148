//! AUC, hyperparameter grids and model selection.

use alloc::string::String;
use alloc::vec::Vec;

use crate::prior::PriorKind;
use crate::score::ScoreKind;
use crate::train::TrainConfig;
use crate::{Error, Result};

/// Area under the ROC curve with anomalies (label 1) as the positive class and
/// lower scores meaning "more anomalous":
/// `P(s_anom < s_norm) + ½ P(s_anom = s_norm)`.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::shape("auc labels", scores.len(), labels.len()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("AUC of NaN scores"));
    }
    let n_anom = labels.iter().filter(|&&l| l == 1).count();
    let n_norm = labels.len() - n_anom;
    if n_anom == 0 {
        return Err(Error::UndefinedAuc("no anomalies"));
    }
    if n_norm == 0 {
        return Err(Error::UndefinedAuc("no normal samples"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // walk tie groups in ascending order; pair counts stay exact in f64
    let mut pairs = 0.0;
    let mut normals_seen = 0usize;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut g_norm, mut g_anom) = (0usize, 0usize);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] == 1 {
                g_anom += 1;
            } else {
                g_norm += 1;
            }
            j += 1;
        }
        normals_seen += g_norm;
        pairs += (g_anom * (n_norm - normals_seen)) as f64 + 0.5 * (g_anom * g_norm) as f64;
        i = j;
    }
    Ok(pairs / (n_anom as f64 * n_norm as f64))
}

/// AUC, or `None` when only one class is present.
pub fn auc_opt(scores: &[f64], labels: &[u8]) -> Result<Option<f64>> {
    match auc(scores, labels) {
        Ok(a) => Ok(Some(a)),
        Err(Error::UndefinedAuc(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Cartesian hyperparameter grid over the WAE settings.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct HyperGrid {
    pub hidden_widths: Vec<usize>,
    pub latent_dims: Vec<usize>,
    pub mixture_components: Vec<usize>,
    pub kernel_widths: Vec<f64>,
    pub betas: Vec<f64>,
    pub prior: PriorKind,
    pub prior_scale: Option<f64>,
    pub hidden_layers: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for HyperGrid {
    /// The full benchmark grid: 2 × 3 × 3 × 4 × 4 = 288 configurations.
    fn default() -> Self {
        let base = TrainConfig::default();
        Self {
            hidden_widths: alloc::vec![32, 64],
            latent_dims: alloc::vec![2, 4, 9],
            mixture_components: alloc::vec![1, 4, 16],
            kernel_widths: alloc::vec![0.001, 0.01, 0.1, 1.0],
            betas: alloc::vec![0.01, 0.1, 1.0, 10.0],
            prior: PriorKind::VmfMixture,
            prior_scale: None,
            hidden_layers: base.hidden_layers,
            steps: base.steps,
            batch_size: base.batch_size,
            learning_rate: base.learning_rate,
        }
    }
}

impl HyperGrid {
    fn base(&self) -> TrainConfig {
        TrainConfig {
            hidden_layers: self.hidden_layers,
            prior_kind: self.prior,
            prior_scale: self.prior_scale,
            steps: self.steps,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            ..TrainConfig::default()
        }
    }
}

/// Expands the grid in nested order (width, latent dim, components, kernel
/// width, β — the last varying fastest), dropping latent sizes above `data_dim`
/// and settings the prior cannot represent (vMF with `k = 1`).
pub fn expand_grid(grid: &HyperGrid, data_dim: usize) -> Result<Vec<TrainConfig>> {
    let axes = [
        grid.hidden_widths.is_empty(),
        grid.latent_dims.is_empty(),
        grid.mixture_components.is_empty(),
        grid.kernel_widths.is_empty(),
        grid.betas.is_empty(),
    ];
    if axes.iter().any(|&e| e) {
        return Err(Error::Config("every grid axis needs at least one value".into()));
    }
    let base = grid.base();
    let mut out = Vec::new();
    for &hidden_width in &grid.hidden_widths {
        for &latent_dim in &grid.latent_dims {
            for &mixture_components in &grid.mixture_components {
                for &kernel_width in &grid.kernel_widths {
                    for &beta in &grid.betas {
                        let cfg = TrainConfig {
                            hidden_width,
                            latent_dim,
                            mixture_components,
                            kernel_width,
                            beta,
                            ..base.clone()
                        };
                        if latent_dim > data_dim || (grid.prior.is_spherical() && latent_dim < 2) {
                            continue;
                        }
                        cfg.validate(data_dim)?;
                        out.push(cfg);
                    }
                }
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Config("no grid configuration fits the data dimension".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Regime {
    /// Pick the configuration with the best training AUC (uses labels).
    Supervised,
    /// Pick by a label-free statistic of the training scores.
    Unsupervised,
}

impl Regime {
    pub const ALL: [Regime; 2] = [Regime::Supervised, Regime::Unsupervised];

    pub fn name(self) -> &'static str {
        match self {
            Regime::Supervised => "supervised",
            Regime::Unsupervised => "unsupervised",
        }
    }
}

/// One (split, configuration, score kind) evaluation.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalRecord {
    pub v: u32,
    pub dataset: String,
    pub split: usize,
    pub split_seed: u64,
    pub config_index: usize,
    pub config: TrainConfig,
    pub score_kind: ScoreKind,
    pub train_auc: Option<f64>,
    pub test_auc: Option<f64>,
    /// Label-free selection statistic: mean training residual `‖x − x'‖²` for
    /// reconstruction error, mean training score for the likelihood scores.
    pub selection_metric: Option<f64>,
    pub wall_time: f64,
    pub failed: bool,
    pub error: Option<String>,
    pub model: Option<String>,
}

pub const RECORD_VERSION: u32 = 1;

/// Selects among the records of one split and score kind. Failed records are
/// skipped; ties go to the lowest configuration index.
pub fn select_model(records: &[EvalRecord], kind: ScoreKind, regime: Regime) -> Option<&EvalRecord> {
    let key = |r: &EvalRecord| -> Option<f64> {
        match regime {
            Regime::Supervised => r.train_auc,
            Regime::Unsupervised => match (kind, r.selection_metric) {
                // smaller residual is better
                (ScoreKind::ReconstructionError, Some(m)) => Some(-m),
                (_, m) => m,
            },
        }
    };
    let mut best: Option<(&EvalRecord, f64)> = None;
    for r in records.iter().filter(|r| r.score_kind == kind && !r.failed) {
        let Some(k) = key(r).filter(|k| !k.is_nan()) else {
            continue;
        };
        let better = match best {
            None => true,
            Some((b, bk)) => k > bk || (k == bk && r.config_index < b.config_index),
        };
        if better {
            best = Some((r, k));
        }
    }
    best.map(|(r, _)| r)
}

/// Count, mean, median, min and max.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let n = values.len();
    Some(Summary {
        n,
        mean: values.iter().sum::<f64>() / n as f64,
        median: quantile(values, 0.5)?,
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Linear-interpolation quantile (the common "type 7" definition).
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() || !(0.0..=1.0).contains(&q) {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = crate::math::floor(pos) as usize;
    let hi = (lo + 1).min(v.len() - 1);
    Some(v[lo] + (pos - lo as f64) * (v[hi] - v[lo]))
}

pub fn interquartile_range(values: &[f64]) -> Option<f64> {
    Some(quantile(values, 0.75)? - quantile(values, 0.25)?)
}
