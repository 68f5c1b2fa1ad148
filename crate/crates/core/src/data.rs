//! Labelled datasets, standardization, train/test splitting and the
//! generated datasets used for demonstrations and tests.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use crate::rng::standard_normal;

use crate::linalg::Matrix;
use crate::math;
use crate::rng::{derive_seed, seeded, stream};
use crate::score::{ScoreKind, Scorer};
use crate::{Error, Result};

/// Rows of features with binary labels: `0` normal, `1` anomaly.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub features: Matrix,
    pub labels: Vec<u8>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, features: Matrix, labels: Vec<u8>) -> Result<Self> {
        let names = (1..=features.cols()).map(|i| format!("x{i}")).collect();
        Self::with_feature_names(name, features, labels, names)
    }

    pub fn with_feature_names(
        name: impl Into<String>,
        features: Matrix,
        labels: Vec<u8>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::shape("labels", features.rows(), labels.len()));
        }
        if feature_names.len() != features.cols() {
            return Err(Error::shape("feature names", features.cols(), feature_names.len()));
        }
        if features.cols() == 0 {
            return Err(Error::invalid("dataset has no features"));
        }
        if let Some(i) = labels.iter().position(|&l| l > 1) {
            return Err(Error::invalid(format!("row {i}: label must be 0 or 1, got {}", labels[i])));
        }
        features.ensure_finite("dataset features")?;
        Ok(Self {
            name: name.into(),
            features,
            labels,
            feature_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_anomalies(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn num_normals(&self) -> usize {
        self.len() - self.num_anomalies()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    pub fn normal_features(&self) -> Matrix {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i] == 0).collect();
        self.features.select_rows(&idx)
    }

    /// Same labels, features replaced (e.g. after standardization).
    pub fn with_features(&self, features: Matrix) -> Result<Dataset> {
        Dataset::with_feature_names(self.name.clone(), features, self.labels.clone(), self.feature_names.clone())
    }
}

/// Per-feature standardization `(x − mean) / std`.
///
/// Constant features get `mean = 0, std = 1`, i.e. pass through unchanged.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Fits on the normal rows of a training set (population std).
    pub fn fit(train: &Dataset) -> Result<Self> {
        if train.len() < 2 {
            return Err(Error::invalid("normalizer needs at least 2 training rows"));
        }
        let x = train.normal_features();
        let x = if x.rows() == 0 { train.features.clone() } else { x };
        Self::fit_matrix(&x)
    }

    pub fn fit_matrix(x: &Matrix) -> Result<Self> {
        if x.rows() == 0 {
            return Err(Error::invalid("normalizer needs at least one row"));
        }
        let n = x.rows() as f64;
        let mut mean = vec![0.0; x.cols()];
        let mut std = vec![1.0; x.cols()];
        for j in 0..x.cols() {
            let m = x.row_iter().map(|r| r[j]).sum::<f64>() / n;
            let var = x.row_iter().map(|r| (r[j] - m) * (r[j] - m)).sum::<f64>() / n;
            let s = math::sqrt(var);
            if s > 1e-12 * (1.0 + math::abs(m)) {
                mean[j] = m;
                std[j] = s;
            }
        }
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::shape("normalizer input", self.dim(), x.len()));
        }
        Ok(x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect())
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.dim() {
            return Err(Error::shape("normalizer input", self.dim(), x.cols()));
        }
        Ok(Matrix::from_fn(x.rows(), x.cols(), |i, j| (x[(i, j)] - self.mean[j]) / self.std[j]))
    }

    pub fn inverse(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.dim() {
            return Err(Error::shape("normalizer input", self.dim(), x.cols()));
        }
        Ok(Matrix::from_fn(x.rows(), x.cols(), |i, j| x[(i, j)] * self.std[j] + self.mean[j]))
    }
}

/// How a dataset is split into train and test sets.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SplitSpec {
    /// Fraction of normal samples used for training.
    pub train_fraction: f64,
    /// Upper bound on the anomaly fraction of the training set.
    pub max_contamination: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            max_contamination: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Random split: `⌊train_fraction · n_normal⌋` normals go to training, plus as many
/// anomalies as keep the training contamination at most `max_contamination`
/// (and no more than `train_fraction` of all anomalies). The rest is test data.
pub fn split(data: &Dataset, spec: &SplitSpec) -> Result<Split> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::invalid("train fraction must be in (0, 1)"));
    }
    if !(0.0..1.0).contains(&spec.max_contamination) {
        return Err(Error::invalid("maximum contamination must be in [0, 1)"));
    }
    let mut rng = seeded(derive_seed(spec.seed, stream::SPLIT, 0));
    let mut normals: Vec<usize> = (0..data.len()).filter(|&i| data.labels[i] == 0).collect();
    let mut anomalies: Vec<usize> = (0..data.len()).filter(|&i| data.labels[i] == 1).collect();
    normals.shuffle(&mut rng);
    anomalies.shuffle(&mut rng);

    let n_norm = math::floor(spec.train_fraction * normals.len() as f64) as usize;
    if n_norm < 2 {
        return Err(Error::invalid("too few normal samples for a training set"));
    }
    let cap = math::floor(n_norm as f64 * spec.max_contamination / (1.0 - spec.max_contamination) + 1e-9) as usize;
    let n_anom = cap.min(math::floor(spec.train_fraction * anomalies.len() as f64) as usize);

    let mut train_indices: Vec<usize> = normals[..n_norm].iter().chain(&anomalies[..n_anom]).copied().collect();
    let mut test_indices: Vec<usize> = normals[n_norm..].iter().chain(&anomalies[n_anom..]).copied().collect();
    train_indices.sort_unstable();
    test_indices.sort_unstable();
    Ok(Split {
        train: data.subset(&train_indices),
        test: data.subset(&test_indices),
        train_indices,
        test_indices,
    })
}

/// Toy data on the parabola `x = (z², z) + e` with `z ~ N(0.5, 0.15)` and
/// `e ~ N(0, 0.01 · I)` (variances). All samples are labelled normal.
pub fn toy_generate(n: usize, seed: u64) -> Result<Dataset> {
    let mut rng = seeded(derive_seed(seed, stream::DATA, 0));
    let z_sd = math::sqrt(0.15);
    let mut data = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let z = 0.5 + z_sd * standard_normal(&mut rng);
        data.push(z * z + 0.1 * standard_normal(&mut rng));
        data.push(z + 0.1 * standard_normal(&mut rng));
    }
    Dataset::new("toy-parabola", Matrix::from_vec(n, 2, data)?, vec![0; n])
}

/// Distance from `p` to the noise-free toy curve `{(t², t)}`.
pub fn toy_curve_distance(p: [f64; 2]) -> f64 {
    // d/dt [(t² − a)² + (t − b)²] = 0  ⇔  2t³ + (1 − 2a)t − b = 0
    let (a, b) = (p[0], p[1]);
    let f = |t: f64| (t * t - a) * (t * t - a) + (t - b) * (t - b);
    let mut best = f(b).min(f(0.0));
    let (lo, hi) = (-4.0 - math::abs(a) - math::abs(b), 4.0 + math::abs(a) + math::abs(b));
    let steps = 400;
    let mut t = lo;
    let h = (hi - lo) / steps as f64;
    for _ in 0..steps {
        let mut u = t + 0.5 * h;
        for _ in 0..30 {
            let g = 2.0 * u * u * u + (1.0 - 2.0 * a) * u - b;
            let dg = 6.0 * u * u + 1.0 - 2.0 * a;
            if dg == 0.0 {
                break;
            }
            u -= g / dg;
        }
        best = best.min(f(u)).min(f(t));
        t += h;
    }
    math::sqrt(best)
}

const MANIFOLD_DIM: usize = 8;
const MANIFOLD_LATENT: usize = 4;
const MANIFOLD_NOISE: f64 = 0.05;
const MANIFOLD_TAIL_RADIUS: f64 = 4.5;

fn manifold_map(a: &Matrix, b: &Matrix, u: &[f64]) -> Vec<f64> {
    let au = a.mul_vec(u).expect("fixed shapes");
    let bu = b.mul_vec(u).expect("fixed shapes");
    au.iter().zip(&bu).map(|(l, n)| l + 0.5 * math::tanh(*n)).collect()
}

/// Eight-dimensional benchmark with a four-dimensional curved normal manifold.
///
/// Normals are `x = A u + ½ tanh(B u) + ε` with `u ~ N(0, I₄)` and `ε` of
/// standard deviation 0.05, for fixed random `A, B`. Anomalies alternate
/// between points pushed off the manifold (a unit-norm random offset) and
/// points on the manifold far in the latent tail (`‖u‖ = 4.5`).
pub fn synthetic_manifold(n_normal: usize, n_anomaly: usize, seed: u64) -> Result<Dataset> {
    let mut fixed = seeded(0x6d61_6e69_666f_6c64);
    let a = Matrix::from_fn(MANIFOLD_DIM, MANIFOLD_LATENT, |_, _| fixed.random_range(-1.0..1.0));
    let b = Matrix::from_fn(MANIFOLD_DIM, MANIFOLD_LATENT, |_, _| fixed.random_range(-1.5..1.5));

    let mut rng = seeded(derive_seed(seed, stream::DATA, 1));
    let gauss = |rng: &mut crate::rng::Rng, n: usize| -> Vec<f64> { (0..n).map(|_| standard_normal(rng)).collect() };
    let mut rows = Vec::with_capacity((n_normal + n_anomaly) * MANIFOLD_DIM);
    let mut labels = vec![0; n_normal];
    labels.reserve(n_anomaly);
    for _ in 0..n_normal {
        let u = gauss(&mut rng, MANIFOLD_LATENT);
        let x = manifold_map(&a, &b, &u);
        let e = gauss(&mut rng, MANIFOLD_DIM);
        rows.extend(x.iter().zip(&e).map(|(x, e)| x + MANIFOLD_NOISE * e));
    }
    for i in 0..n_anomaly {
        let u = gauss(&mut rng, MANIFOLD_LATENT);
        let e = gauss(&mut rng, MANIFOLD_DIM);
        let x = if i % 2 == 0 {
            let off = gauss(&mut rng, MANIFOLD_DIM);
            let n = math::norm(&off);
            let x = manifold_map(&a, &b, &u);
            x.iter().zip(&off).map(|(x, o)| x + o / n).collect::<Vec<_>>()
        } else {
            let n = math::norm(&u);
            let tail: Vec<f64> = u.iter().map(|v| MANIFOLD_TAIL_RADIUS * v / n).collect();
            manifold_map(&a, &b, &tail)
        };
        rows.extend(x.iter().zip(&e).map(|(x, e)| x + MANIFOLD_NOISE * e));
        labels.push(1);
    }
    Dataset::new("synthetic-manifold", Matrix::from_vec(labels.len(), MANIFOLD_DIM, rows)?, labels)
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Scores on a regular 2-D grid; rows are ordered with `x1` varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridTable {
    pub kinds: Vec<ScoreKind>,
    /// `[x1, x2, score per kind...]`
    pub rows: Vec<Vec<f64>>,
}

pub fn grid_eval(
    scorer: &Scorer<'_>,
    kinds: &[ScoreKind],
    x1_range: (f64, f64),
    x2_range: (f64, f64),
    resolution: usize,
) -> Result<GridTable> {
    if scorer.model.data_dim() != 2 {
        return Err(Error::shape("grid evaluation needs a 2-D model", 2, scorer.model.data_dim()));
    }
    let xs = linspace(x1_range.0, x1_range.1, resolution);
    let ys = linspace(x2_range.0, x2_range.1, resolution);
    let mut rows = Vec::with_capacity(resolution * resolution);
    for &y in &ys {
        for &x in &xs {
            let mut row = vec![x, y];
            for &k in kinds {
                row.push(scorer.score(k, &[x, y])?);
            }
            rows.push(row);
        }
    }
    Ok(GridTable {
        kinds: kinds.to_vec(),
        rows,
    })
}
