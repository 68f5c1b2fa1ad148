//! The two-dimensional parabola problem: a model with a one-dimensional
//! latent space, score heatmaps, and probe sets that expose where the
//! reconstruction error assigns high density off the data manifold.

use tscore_core::data::{grid_eval, linspace, toy_curve_distance, toy_generate, GridTable};
use tscore_core::harness::auc;
use tscore_core::rng::{derive_seed, stream};
use tscore_core::{Matrix, PriorKind, ScoreKind, ScoreOptions, Scorer, TrainConfig, TrainedModel};

#[derive(Debug, Clone, PartialEq)]
pub struct ToySpec {
    pub samples: usize,
    pub steps: usize,
    /// Heatmap points per axis.
    pub resolution: usize,
    pub seed: u64,
}

impl Default for ToySpec {
    fn default() -> Self {
        Self {
            samples: 2000,
            steps: 10_000,
            resolution: 100,
            seed: 42,
        }
    }
}

pub const HEATMAP_RANGE: (f64, f64) = (-0.2, 1.2);
/// Region searched for off-manifold probes, and its resolution per axis.
pub const PROBE_X1: (f64, f64) = (-1.0, 3.0);
pub const PROBE_X2: (f64, f64) = (-1.5, 2.5);
pub const PROBE_RESOLUTION: usize = 200;
/// Minimum distance from the noise-free curve for a probe (≈ 3 noise standard deviations).
pub const PROBE_MIN_DISTANCE: f64 = 0.3;
pub const N_OFF_PROBES: usize = 50;
pub const N_ON_PROBES: usize = 200;

pub fn toy_config(spec: &ToySpec) -> TrainConfig {
    TrainConfig {
        hidden_width: 32,
        latent_dim: 1,
        mixture_components: 1,
        prior_kind: PriorKind::StandardNormal,
        beta: 0.01,
        kernel_width: 1.0,
        steps: spec.steps,
        seed: derive_seed(spec.seed, stream::TRAIN, 0),
        ..TrainConfig::default()
    }
}

pub fn train_toy(spec: &ToySpec) -> anyhow::Result<TrainedModel> {
    let data = toy_generate(spec.samples, derive_seed(spec.seed, stream::DATA, 0))?;
    Ok(tscore_core::train(&toy_config(spec), &data.features)?)
}

/// All four scores on `[−0.2, 1.2]²`.
pub fn heatmap(model: &TrainedModel, resolution: usize) -> anyhow::Result<GridTable> {
    let scorer = Scorer::new(model, ScoreOptions::default());
    Ok(grid_eval(&scorer, &ScoreKind::ALL, HEATMAP_RANGE, HEATMAP_RANGE, resolution)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Probes {
    /// Fresh samples from the data distribution.
    pub on_manifold: Matrix,
    /// Points far from the curve that the reconstruction score rates highest.
    pub off_manifold: Matrix,
}

impl Probes {
    /// All points with labels (0 on-manifold, 1 off-manifold).
    pub fn labelled(&self) -> (Vec<Vec<f64>>, Vec<u8>) {
        let pts: Vec<Vec<f64>> = self
            .on_manifold
            .row_iter()
            .chain(self.off_manifold.row_iter())
            .map(<[f64]>::to_vec)
            .collect();
        let mut labels = vec![0; self.on_manifold.rows()];
        labels.resize(pts.len(), 1);
        (pts, labels)
    }
}

pub fn make_probes(model: &TrainedModel, seed: u64) -> anyhow::Result<Probes> {
    let scorer = Scorer::new(model, ScoreOptions::default());
    let xs = linspace(PROBE_X1.0, PROBE_X1.1, PROBE_RESOLUTION);
    let ys = linspace(PROBE_X2.0, PROBE_X2.1, PROBE_RESOLUTION);
    let mut cells = Vec::new();
    for &y in &ys {
        for &x in &xs {
            if toy_curve_distance([x, y]) >= PROBE_MIN_DISTANCE {
                cells.push(([x, y], scorer.score(ScoreKind::ReconstructionError, &[x, y])?));
            }
        }
    }
    // stable: equal scores keep grid order
    cells.sort_by(|a, b| b.1.total_cmp(&a.1));
    cells.truncate(N_OFF_PROBES);
    let off = Matrix::from_rows(&cells.iter().map(|c| c.0).collect::<Vec<_>>())?;
    let on = toy_generate(N_ON_PROBES, derive_seed(seed, stream::DATA, 1))?.features;
    Ok(Probes {
        on_manifold: on,
        off_manifold: off,
    })
}

pub fn probe_auc(model: &TrainedModel, probes: &Probes, kind: ScoreKind) -> anyhow::Result<f64> {
    let scorer = Scorer::new(model, ScoreOptions::default());
    let (pts, labels) = probes.labelled();
    let scores = pts.iter().map(|p| scorer.score(kind, p)).collect::<Result<Vec<_>, _>>()?;
    Ok(auc(&scores, &labels)?)
}
