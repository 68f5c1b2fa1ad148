//! Grid-search experiments and latent-dimension sweeps over repeated
//! train/test splits.
//!
//! Every `(split, configuration)` pair is an independent work unit with its
//! own derived seed, so results do not depend on the number of workers or on
//! the order in which units finish.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use tscore_core::data::split;
use tscore_core::harness::{auc_opt, summarize, RECORD_VERSION};
use tscore_core::rng::{derive_seed, stream};
use tscore_core::{
    expand_grid, select_model, Dataset, EvalRecord, HyperGrid, Matrix, Normalizer, Regime, ScoreKind, ScoreOptions,
    Scorer, SplitSpec, TrainConfig, TrainedModel,
};

use crate::csv_io::{fmt_f64, save_rows};
use crate::model_file;
use crate::pool::run_ordered;
use crate::results::ResultsWriter;

/// One train/test split with features standardized on its training normals.
#[derive(Debug, Clone)]
pub struct PreparedSplit {
    pub index: usize,
    pub seed: u64,
    pub normalizer: Normalizer,
    pub train_x: Matrix,
    pub train_labels: Vec<u8>,
    pub test_x: Matrix,
    pub test_labels: Vec<u8>,
}

pub fn split_seed(master: u64, index: usize) -> u64 {
    derive_seed(master, stream::SPLIT, index as u64)
}

pub fn prepare_split(data: &Dataset, master: u64, index: usize) -> anyhow::Result<PreparedSplit> {
    let seed = split_seed(master, index);
    let s = split(data, &SplitSpec { seed, ..SplitSpec::default() })?;
    let normalizer = Normalizer::fit(&s.train)?;
    Ok(PreparedSplit {
        index,
        seed,
        train_x: normalizer.transform(&s.train.features)?,
        test_x: normalizer.transform(&s.test.features)?,
        normalizer,
        train_labels: s.train.labels,
        test_labels: s.test.labels,
    })
}

/// Scores of one kind on one split.
#[derive(Debug, Clone, PartialEq)]
pub struct KindEval {
    pub kind: ScoreKind,
    pub train_auc: Option<f64>,
    pub test_auc: Option<f64>,
    /// Mean training residual for reconstruction error, mean training score otherwise.
    pub selection_metric: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn evaluate(
    model: &TrainedModel,
    s: &PreparedSplit,
    kinds: &[ScoreKind],
    options: ScoreOptions,
) -> anyhow::Result<Vec<KindEval>> {
    let scorer = Scorer::new(model, options);
    kinds
        .iter()
        .map(|&kind| {
            let train = scorer.score_rows(kind, &s.train_x)?;
            let test = scorer.score_rows(kind, &s.test_x)?;
            if train.iter().chain(&test).any(|v| v.is_nan()) {
                bail!("score '{}' produced NaN", kind.name());
            }
            let selection_metric = match kind {
                ScoreKind::ReconstructionError => {
                    let recon = model.reconstruct_batch(&s.train_x)?;
                    let res: Vec<f64> = s
                        .train_x
                        .row_iter()
                        .zip(recon.row_iter())
                        .map(|(a, b)| tscore_core::math::dist_sq(a, b))
                        .collect();
                    mean(&res)
                }
                _ => mean(&train),
            };
            Ok(KindEval {
                kind,
                train_auc: auc_opt(&train, &s.train_labels)?,
                test_auc: auc_opt(&test, &s.test_labels)?,
                selection_metric,
            })
        })
        .collect()
}

/// Trains on the split's (standardized, unlabelled) training rows.
pub fn fit(config: &TrainConfig, s: &PreparedSplit) -> anyhow::Result<TrainedModel> {
    let mut model = tscore_core::train(config, &s.train_x)?;
    model.normalizer = Some(s.normalizer.clone());
    Ok(model)
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub grid: HyperGrid,
    pub splits: usize,
    pub kinds: Vec<ScoreKind>,
    pub seed: u64,
    pub jobs: usize,
    pub score: ScoreOptions,
    pub save_models: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            grid: HyperGrid::default(),
            splits: 5,
            kinds: vec![ScoreKind::ReconstructionError, ScoreKind::ProposedDecoder],
            seed: 42,
            jobs: 1,
            score: ScoreOptions::default(),
            save_models: true,
        }
    }
}

/// Selected test AUCs aggregated over splits.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub dataset: String,
    pub regime: Regime,
    pub kind: ScoreKind,
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

/// The configuration chosen for one split.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectedRow {
    pub dataset: String,
    pub regime: Regime,
    pub kind: ScoreKind,
    pub split: usize,
    pub config_index: usize,
    pub train_auc: Option<f64>,
    pub test_auc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub records: Vec<EvalRecord>,
    pub configs: usize,
    /// Units trained in this run (excludes those recovered from the results file).
    pub trained: usize,
    pub selected: Vec<SelectedRow>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentOutcome {
    pub fn summary_for(&self, regime: Regime, kind: ScoreKind) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.regime == regime && r.kind == kind)
    }
}

pub fn summary_path(out: &Path) -> PathBuf {
    out.with_extension("summary.csv")
}

pub fn selected_path(out: &Path) -> PathBuf {
    out.with_extension("selected.csv")
}

pub fn models_dir(out: &Path) -> PathBuf {
    out.with_extension("models")
}

/// Runs (or resumes) the grid experiment, writing results to `out` and the
/// summaries next to it.
pub fn run_experiment(data: &Dataset, spec: &ExperimentSpec, out: &Path) -> anyhow::Result<ExperimentOutcome> {
    if spec.splits == 0 {
        bail!("need at least one split");
    }
    if spec.kinds.is_empty() {
        bail!("need at least one score kind");
    }
    let kinds: Vec<ScoreKind> = {
        let set: BTreeSet<ScoreKind> = spec.kinds.iter().copied().collect();
        set.into_iter().collect()
    };
    let configs = expand_grid(&spec.grid, data.dim())?;
    let (mut writer, mut records) = ResultsWriter::resume(out, &kinds)?;
    for r in &records {
        let matches = r.dataset == data.name
            && r.split < spec.splits
            && r.split_seed == split_seed(spec.seed, r.split)
            && configs
                .get(r.config_index)
                .is_some_and(|c| r.config == unit_config(c, spec.seed, r.split, r.config_index));
        if !matches {
            bail!(
                "{} holds results of a different experiment (dataset, seed or grid differ); use a fresh output file",
                out.display()
            );
        }
    }
    let done: BTreeSet<(usize, usize)> = records.iter().map(|r| (r.split, r.config_index)).collect();

    let models = models_dir(out);
    if spec.save_models {
        std::fs::create_dir_all(&models).with_context(|| format!("creating {}", models.display()))?;
    }
    let prepared: Vec<PreparedSplit> = (0..spec.splits)
        .map(|i| prepare_split(data, spec.seed, i))
        .collect::<anyhow::Result<_>>()?;
    let units: Vec<(usize, usize)> = (0..spec.splits)
        .flat_map(|s| (0..configs.len()).map(move |c| (s, c)))
        .filter(|u| !done.contains(u))
        .collect();

    let out_dir = out.parent().map(Path::to_path_buf).unwrap_or_default();
    let work = |&(s, c): &(usize, usize)| -> anyhow::Result<Vec<EvalRecord>> {
        let split = &prepared[s];
        let config = unit_config(&configs[c], spec.seed, s, c);
        let start = Instant::now();
        let base = EvalRecord {
            v: RECORD_VERSION,
            dataset: data.name.clone(),
            split: s,
            split_seed: split.seed,
            config_index: c,
            config: config.clone(),
            score_kind: kinds[0],
            train_auc: None,
            test_auc: None,
            selection_metric: None,
            wall_time: 0.0,
            failed: false,
            error: None,
            model: None,
        };
        let result = fit(&config, split).and_then(|model| {
            let model_path = if spec.save_models {
                let p = models.join(format!("s{s}_c{c}.model"));
                model_file::save(&p, &model)?;
                Some(p.strip_prefix(&out_dir).unwrap_or(&p).display().to_string())
            } else {
                None
            };
            Ok((evaluate(&model, split, &kinds, spec.score)?, model_path))
        });
        let wall_time = start.elapsed().as_secs_f64();
        Ok(match result {
            Ok((evals, model)) => evals
                .into_iter()
                .map(|e| EvalRecord {
                    score_kind: e.kind,
                    train_auc: e.train_auc,
                    test_auc: e.test_auc,
                    selection_metric: Some(e.selection_metric),
                    wall_time,
                    model: model.clone(),
                    ..base.clone()
                })
                .collect(),
            Err(err) => kinds
                .iter()
                .map(|&k| EvalRecord {
                    score_kind: k,
                    wall_time,
                    failed: true,
                    error: Some(format!("{err:#}")),
                    ..base.clone()
                })
                .collect(),
        })
    };
    let mut trained = 0;
    run_ordered(&units, spec.jobs, work, |_, batch| {
        let batch = batch?;
        writer.append(&batch)?;
        records.extend(batch);
        trained += 1;
        Ok(())
    })?;

    records.sort_by_key(|r| (r.split, r.config_index, r.score_kind));
    let (selected, summary) = summarize_records(&data.name, &records, &kinds, spec.splits);
    write_selected(&selected_path(out), &selected)?;
    write_summary(&summary_path(out), &summary)?;
    Ok(ExperimentOutcome {
        records,
        configs: configs.len(),
        trained,
        selected,
        summary,
    })
}

fn unit_config(c: &TrainConfig, master: u64, split: usize, config_index: usize) -> TrainConfig {
    TrainConfig {
        seed: derive_seed(master, stream::TRAIN, ((split as u64) << 32) | config_index as u64),
        ..c.clone()
    }
}

/// Applies both selection regimes per split and aggregates the selected test AUCs.
pub fn summarize_records(
    dataset: &str,
    records: &[EvalRecord],
    kinds: &[ScoreKind],
    splits: usize,
) -> (Vec<SelectedRow>, Vec<SummaryRow>) {
    let mut selected = Vec::new();
    let mut summary = Vec::new();
    for regime in Regime::ALL {
        for &kind in kinds {
            let mut aucs = Vec::new();
            for s in 0..splits {
                let recs: Vec<EvalRecord> = records.iter().filter(|r| r.split == s).cloned().collect();
                if let Some(r) = select_model(&recs, kind, regime) {
                    selected.push(SelectedRow {
                        dataset: dataset.to_string(),
                        regime,
                        kind,
                        split: s,
                        config_index: r.config_index,
                        train_auc: r.train_auc,
                        test_auc: r.test_auc,
                    });
                    aucs.extend(r.test_auc);
                }
            }
            if let Some(s) = summarize(&aucs) {
                summary.push(SummaryRow {
                    dataset: dataset.to_string(),
                    regime,
                    kind,
                    n: s.n,
                    mean: s.mean,
                    median: s.median,
                    min: s.min,
                    max: s.max,
                });
            }
        }
    }
    (selected, summary)
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn strings<const N: usize>(v: [&str; N]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> anyhow::Result<()> {
    let header = strings(["dataset", "regime", "score_kind", "n", "mean", "median", "min", "max"]);
    save_rows(
        path,
        &header,
        rows.iter().map(|r| {
            vec![
                r.dataset.clone(),
                r.regime.name().into(),
                r.kind.name().into(),
                r.n.to_string(),
                fmt_f64(r.mean),
                fmt_f64(r.median),
                fmt_f64(r.min),
                fmt_f64(r.max),
            ]
        }),
    )?;
    Ok(())
}

pub fn write_selected(path: &Path, rows: &[SelectedRow]) -> anyhow::Result<()> {
    let header = strings(["dataset", "regime", "score_kind", "split", "config_index", "train_auc", "test_auc"]);
    save_rows(
        path,
        &header,
        rows.iter().map(|r| {
            vec![
                r.dataset.clone(),
                r.regime.name().into(),
                r.kind.name().into(),
                r.split.to_string(),
                r.config_index.to_string(),
                opt(r.train_auc),
                opt(r.test_auc),
            ]
        }),
    )?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub base: TrainConfig,
    pub latent_dims: Vec<usize>,
    pub splits: usize,
    pub kinds: Vec<ScoreKind>,
    pub seed: u64,
    pub jobs: usize,
    pub score: ScoreOptions,
}

/// One (k, split, kind) cell of a latent sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub k: usize,
    pub split: usize,
    pub kind: ScoreKind,
    pub train_auc: Option<f64>,
    pub test_auc: Option<f64>,
    pub error: Option<String>,
}

/// Trains `base` with every latent dimension on every split.
pub fn latent_sweep(data: &Dataset, spec: &SweepSpec) -> anyhow::Result<Vec<SweepRow>> {
    if let Some(&k) = spec.latent_dims.iter().find(|&&k| k == 0 || k > data.dim()) {
        bail!("latent dimension {k} outside 1..={}", data.dim());
    }
    if spec.latent_dims.is_empty() || spec.splits == 0 || spec.kinds.is_empty() {
        bail!("latent sweep needs dimensions, splits and score kinds");
    }
    let prepared: Vec<PreparedSplit> = (0..spec.splits)
        .map(|i| prepare_split(data, spec.seed, i))
        .collect::<anyhow::Result<_>>()?;
    let units: Vec<(usize, usize)> = spec
        .latent_dims
        .iter()
        .flat_map(|&k| (0..spec.splits).map(move |s| (k, s)))
        .collect();
    let work = |&(k, s): &(usize, usize)| -> Vec<SweepRow> {
        let config = TrainConfig {
            latent_dim: k,
            seed: derive_seed(spec.seed, stream::TRAIN, ((s as u64) << 32) | k as u64),
            ..spec.base.clone()
        };
        let result = fit(&config, &prepared[s]).and_then(|m| evaluate(&m, &prepared[s], &spec.kinds, spec.score));
        match result {
            Ok(evals) => evals
                .into_iter()
                .map(|e| SweepRow {
                    k,
                    split: s,
                    kind: e.kind,
                    train_auc: e.train_auc,
                    test_auc: e.test_auc,
                    error: None,
                })
                .collect(),
            Err(err) => spec
                .kinds
                .iter()
                .map(|&kind| SweepRow {
                    k,
                    split: s,
                    kind,
                    train_auc: None,
                    test_auc: None,
                    error: Some(format!("{err:#}")),
                })
                .collect(),
        }
    };
    let mut rows = Vec::new();
    run_ordered(&units, spec.jobs, work, |_, r| {
        rows.extend(r);
        Ok(())
    })?;
    Ok(rows)
}

/// Long format: `k,split,score_kind,train_auc,test_auc,error`.
pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> anyhow::Result<()> {
    let header = strings(["k", "split", "score_kind", "train_auc", "test_auc", "error"]);
    save_rows(
        path,
        &header,
        rows.iter().map(|r| {
            vec![
                r.k.to_string(),
                r.split.to_string(),
                r.kind.name().into(),
                opt(r.train_auc),
                opt(r.test_auc),
                r.error.clone().unwrap_or_default(),
            ]
        }),
    )?;
    Ok(())
}
