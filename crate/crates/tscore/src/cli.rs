//! The `tscore` command line.
//!
//! Exit codes: 0 success, 1 usage error (bad flags, missing input file),
//! 2 runtime error (bad data, dimension mismatch, training failure).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{ArgGroup, Args, Parser, Subcommand};
use tscore_core::score::RefineOptions;
use tscore_core::{Normalizer, PriorKind, ScoreKind, ScoreOptions, Scorer, SigmaSource, TrainConfig};

use crate::csv_io::{self, fmt_f64, read_table, save_rows};
use crate::experiment::{self, ExperimentSpec, SweepSpec};
use crate::{config, fetch, model_file, pool, toy};

#[derive(Debug, Parser)]
#[command(name = "tscore", version, about = "Autoencoder anomaly scores: train, score, and benchmark")]
pub struct Cli {
    /// Master seed for all randomness
    #[arg(long, global = true, env = "TSCORE_SEED", default_value_t = 42)]
    pub seed: u64,

    /// Worker threads for experiments and sweeps [default: logical cores]
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model on a CSV dataset
    Train(TrainArgs),
    /// Append anomaly scores to a CSV dataset
    Score(ScoreArgs),
    /// Grid search over repeated splits with supervised and unsupervised selection
    Experiment(ExperimentArgs),
    /// Train the 2-D parabola model and write score heatmaps
    ToyFigure(ToyArgs),
    /// Train one configuration for each latent dimension
    LatentSweep(SweepArgs),
    /// Convert a downloaded benchmark file, or write the synthetic stand-in
    FetchData(FetchArgs),
}

#[derive(Debug, Args)]
pub struct ScoreFlags {
    /// Residual variance for the proposed scores: beta, re (σ²_RE) or a number
    #[arg(long, default_value = "beta", value_parser = parse_sigma)]
    pub sigma: SigmaSource,

    /// Gradient steps refining the latent point before scoring (0 = off)
    #[arg(long, default_value_t = 0)]
    pub refine_steps: usize,

    /// Refinement starts: the encoding plus prior samples
    #[arg(long, default_value_t = 1)]
    pub refine_restarts: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Input CSV (a `label` column is optional)
    #[arg(long)]
    pub data: PathBuf,

    /// TOML training configuration [default: built-in defaults]
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Output model file
    #[arg(long)]
    pub out: PathBuf,

    /// Override the number of training steps
    #[arg(long)]
    pub steps: Option<usize>,

    /// Train only on rows labelled 0
    #[arg(long, default_value_t = false)]
    pub normals_only: bool,

    /// Skip feature standardization
    #[arg(long, default_value_t = false)]
    pub no_normalize: bool,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Model file written by `train`
    #[arg(long)]
    pub model: PathBuf,

    /// Input CSV with the model's feature columns (a `label` column is optional)
    #[arg(long)]
    pub data: PathBuf,

    /// Comma-separated score kinds: re, pz, proposed, proposed_enc
    #[arg(long, value_delimiter = ',', default_value = "re,pz,proposed", value_parser = parse_kind)]
    pub kinds: Vec<ScoreKind>,

    /// Output CSV: input columns plus one `score_<kind>` column per kind
    #[arg(long)]
    pub out: PathBuf,

    #[command(flatten)]
    pub scoring: ScoreFlags,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Labelled input CSV
    #[arg(long)]
    pub data: PathBuf,

    /// TOML hyper-parameter grid [default: the full 288-configuration grid]
    #[arg(long)]
    pub grid: Option<PathBuf>,

    /// Number of random train/test splits
    #[arg(long, default_value_t = 5)]
    pub splits: usize,

    /// Results file (JSON lines); an existing file is resumed
    #[arg(long)]
    pub out: PathBuf,

    /// Comma-separated score kinds
    #[arg(long, value_delimiter = ',', default_value = "re,pz,proposed,proposed_enc", value_parser = parse_kind)]
    pub kinds: Vec<ScoreKind>,

    /// Override the grid's training steps
    #[arg(long)]
    pub steps: Option<usize>,

    /// Do not save trained models next to the results
    #[arg(long, default_value_t = false)]
    pub no_models: bool,

    #[command(flatten)]
    pub scoring: ScoreFlags,
}

#[derive(Debug, Args)]
pub struct ToyArgs {
    /// Output grid CSV: x1,x2,score_re,score_pz,score_proposed,score_proposed_enc
    #[arg(long)]
    pub out: PathBuf,

    /// Training samples
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,

    /// Training steps
    #[arg(long, default_value_t = 10_000)]
    pub steps: usize,

    /// Grid points per axis over [-0.2, 1.2]
    #[arg(long, default_value_t = 100)]
    pub resolution: usize,

    /// Also save the trained model here
    #[arg(long)]
    pub model_out: Option<PathBuf>,

    /// Also write on/off-manifold probe points with their scores here
    #[arg(long)]
    pub probes: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Labelled input CSV
    #[arg(long)]
    pub data: PathBuf,

    /// Latent dimensions: a range `1..8` (inclusive) or a list `1,2,4`
    #[arg(long = "k", default_value = "1..8", value_parser = parse_dims)]
    pub latent_dims: Dims,

    /// Number of random train/test splits
    #[arg(long, default_value_t = 5)]
    pub splits: usize,

    /// Output CSV: k,split,score_kind,train_auc,test_auc,error
    #[arg(long)]
    pub out: PathBuf,

    /// TOML base training configuration [default: Gaussian prior, built-in defaults]
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Comma-separated score kinds
    #[arg(long, value_delimiter = ',', default_value = "re,proposed", value_parser = parse_kind)]
    pub kinds: Vec<ScoreKind>,

    /// Override the number of training steps
    #[arg(long)]
    pub steps: Option<usize>,

    #[command(flatten)]
    pub scoring: ScoreFlags,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["raw", "synthetic"])))]
pub struct FetchArgs {
    /// Output CSV
    #[arg(long)]
    pub out: PathBuf,

    /// Raw `breast-cancer-wisconsin.data` file downloaded from the UCI repository
    #[arg(long)]
    pub raw: Option<PathBuf>,

    /// Write the 8-dimensional synthetic stand-in instead
    #[arg(long, default_value_t = false)]
    pub synthetic: bool,

    /// Normal samples in the synthetic data
    #[arg(long, default_value_t = 500)]
    pub normals: usize,

    /// Anomalies in the synthetic data
    #[arg(long, default_value_t = 100)]
    pub anomalies: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dims(pub Vec<usize>);

fn parse_kind(s: &str) -> Result<ScoreKind, String> {
    ScoreKind::parse(s.trim()).ok_or_else(|| format!("unknown score kind '{s}' (expected re, pz, proposed, proposed_enc)"))
}

fn parse_sigma(s: &str) -> Result<SigmaSource, String> {
    match s {
        "beta" => Ok(SigmaSource::Beta),
        "re" => Ok(SigmaSource::ResidualVariance),
        v => match v.parse::<f64>() {
            Ok(x) if x > 0.0 && x.is_finite() => Ok(SigmaSource::Fixed(x)),
            _ => Err(format!("expected beta, re or a positive number, got '{s}'")),
        },
    }
}

fn parse_dims(s: &str) -> Result<Dims, String> {
    let bad = || format!("expected a range like 1..8 or a list like 1,2,4, got '{s}'");
    let dims: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        (a..=b).collect()
    } else {
        s.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?
    };
    if dims.is_empty() || dims.contains(&0) {
        return Err(bad());
    }
    Ok(Dims(dims))
}

impl ScoreFlags {
    fn options(&self, seed: u64) -> ScoreOptions {
        ScoreOptions {
            sigma: self.sigma,
            refine: (self.refine_steps > 0).then_some(RefineOptions {
                steps: self.refine_steps,
                restarts: self.refine_restarts.max(1),
                seed,
            }),
            ..ScoreOptions::default()
        }
    }
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

fn require_file(p: &Path) -> Result<(), CliError> {
    if p.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("input file not found: {}", p.display())))
    }
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            match &e {
                CliError::Usage(m) => eprintln!("error: {m}"),
                CliError::Runtime(err) => eprintln!("error: {err:#}"),
            }
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let jobs = cli.jobs.unwrap_or_else(pool::default_jobs).max(1);
    match &cli.command {
        Command::Train(a) => train(a, cli.seed),
        Command::Score(a) => score(a, cli.seed),
        Command::Experiment(a) => run_experiment(a, cli.seed, jobs),
        Command::ToyFigure(a) => toy_figure(a, cli.seed),
        Command::LatentSweep(a) => sweep(a, cli.seed, jobs),
        Command::FetchData(a) => fetch_data(a, cli.seed),
    }
}

fn train(a: &TrainArgs, seed: u64) -> Result<(), CliError> {
    require_file(&a.data)?;
    if let Some(c) = &a.config {
        require_file(c)?;
    }
    let mut config = match &a.config {
        Some(p) => config::load_train_config(p)?,
        None => TrainConfig::default(),
    };
    config.seed = seed;
    if let Some(s) = a.steps {
        config.steps = s;
    }
    let table = read_table(&a.data, false).map_err(anyhow::Error::from)?;
    let keep: Vec<usize> = match (&table.labels, a.normals_only) {
        (Some(l), true) => (0..l.len()).filter(|&i| l[i] == 0).collect(),
        _ => (0..table.features.rows()).collect(),
    };
    let x = table.features.select_rows(&keep);
    let normalizer = if a.no_normalize {
        None
    } else {
        let fit_rows: Vec<usize> = match &table.labels {
            Some(l) if l.contains(&0) => (0..l.len()).filter(|&i| l[i] == 0).collect(),
            _ => (0..table.features.rows()).collect(),
        };
        Some(Normalizer::fit_matrix(&table.features.select_rows(&fit_rows)).map_err(anyhow::Error::from)?)
    };
    let x = match &normalizer {
        Some(n) => n.transform(&x).map_err(anyhow::Error::from)?,
        None => x,
    };
    let mut model = tscore_core::train(&config, &x).map_err(anyhow::Error::from)?;
    model.normalizer = normalizer;
    model_file::save(&a.out, &model).map_err(anyhow::Error::from)?;
    println!(
        "trained on {} rows: final loss {:.6}, residual variance {:.6} -> {}",
        x.rows(),
        model.final_loss,
        model.residual_variance,
        a.out.display()
    );
    Ok(())
}

fn score(a: &ScoreArgs, seed: u64) -> Result<(), CliError> {
    require_file(&a.model)?;
    require_file(&a.data)?;
    let model = model_file::load(&a.model).map_err(anyhow::Error::from)?;
    let table = read_table(&a.data, false).map_err(anyhow::Error::from)?;
    if table.features.cols() != model.data_dim() {
        return Err(CliError::Runtime(anyhow::anyhow!(
            "dimension mismatch: model expects {} features, {} has {}",
            model.data_dim(),
            a.data.display(),
            table.features.cols()
        )));
    }
    let x = match &model.normalizer {
        Some(n) => n.transform(&table.features).map_err(anyhow::Error::from)?,
        None => table.features.clone(),
    };
    let scorer = Scorer::new(&model, a.scoring.options(seed));
    let mut columns = Vec::new();
    for &k in &a.kinds {
        let s = scorer
            .score_rows(k, &x)
            .map_err(anyhow::Error::from)
            .with_context(|| format!("computing {}", k.name()))?;
        columns.push((k.column(), s));
    }
    csv_io::save_scored(&a.out, &table, &columns).map_err(anyhow::Error::from)?;
    println!("scored {} rows -> {}", x.rows(), a.out.display());
    Ok(())
}

fn run_experiment(a: &ExperimentArgs, seed: u64, jobs: usize) -> Result<(), CliError> {
    require_file(&a.data)?;
    if let Some(g) = &a.grid {
        require_file(g)?;
    }
    let mut grid = match &a.grid {
        Some(p) => config::load_grid(p)?,
        None => tscore_core::HyperGrid::default(),
    };
    if let Some(s) = a.steps {
        grid.steps = s;
    }
    let data = csv_io::load_csv(&a.data).map_err(anyhow::Error::from)?;
    let spec = ExperimentSpec {
        grid,
        splits: a.splits,
        kinds: a.kinds.clone(),
        seed,
        jobs,
        score: a.scoring.options(seed),
        save_models: !a.no_models,
    };
    let outcome = experiment::run_experiment(&data, &spec, &a.out)?;
    println!(
        "{} configurations x {} splits ({} trained now), {} records -> {}",
        outcome.configs,
        spec.splits,
        outcome.trained,
        outcome.records.len(),
        a.out.display()
    );
    for r in &outcome.summary {
        println!(
            "{:<12} {:<13} mean AUC {:.4}  median {:.4}  [{:.4}, {:.4}]",
            r.regime.name(),
            r.kind.name(),
            r.mean,
            r.median,
            r.min,
            r.max
        );
    }
    Ok(())
}

fn toy_figure(a: &ToyArgs, seed: u64) -> Result<(), CliError> {
    let spec = toy::ToySpec {
        samples: a.samples,
        steps: a.steps,
        resolution: a.resolution,
        seed,
    };
    let model = toy::train_toy(&spec)?;
    let grid = toy::heatmap(&model, spec.resolution)?;
    csv_io::save_grid(&a.out, &grid).map_err(anyhow::Error::from)?;
    if let Some(p) = &a.model_out {
        model_file::save(p, &model).map_err(anyhow::Error::from)?;
    }
    let probes = toy::make_probes(&model, seed)?;
    if let Some(p) = &a.probes {
        let scorer = Scorer::new(&model, ScoreOptions::default());
        let (pts, labels) = probes.labelled();
        let mut header = vec!["x1".to_string(), "x2".into(), "label".into()];
        header.extend(ScoreKind::ALL.iter().map(|k| k.column()));
        let mut rows = Vec::new();
        for (pt, l) in pts.iter().zip(&labels) {
            let mut r = vec![fmt_f64(pt[0]), fmt_f64(pt[1]), l.to_string()];
            for k in ScoreKind::ALL {
                r.push(fmt_f64(scorer.score(k, pt).map_err(anyhow::Error::from)?));
            }
            rows.push(r);
        }
        save_rows(p, &header, rows).map_err(anyhow::Error::from)?;
    }
    println!("grid {}x{} -> {}", spec.resolution, spec.resolution, a.out.display());
    for k in ScoreKind::ALL {
        println!("probe AUC {:<13} {:.4}", k.name(), toy::probe_auc(&model, &probes, k)?);
    }
    Ok(())
}

fn sweep(a: &SweepArgs, seed: u64, jobs: usize) -> Result<(), CliError> {
    require_file(&a.data)?;
    if let Some(c) = &a.config {
        require_file(c)?;
    }
    let mut base = match &a.config {
        Some(p) => config::load_train_config(p)?,
        None => TrainConfig {
            prior_kind: PriorKind::GaussianMixture,
            ..TrainConfig::default()
        },
    };
    if let Some(s) = a.steps {
        base.steps = s;
    }
    let data = csv_io::load_csv(&a.data).map_err(anyhow::Error::from)?;
    let spec = SweepSpec {
        base,
        latent_dims: a.latent_dims.0.clone(),
        splits: a.splits,
        kinds: a.kinds.clone(),
        seed,
        jobs,
        score: a.scoring.options(seed),
    };
    let rows = experiment::latent_sweep(&data, &spec)?;
    experiment::write_sweep(&a.out, &rows)?;
    println!("{} rows -> {}", rows.len(), a.out.display());
    Ok(())
}

fn fetch_data(a: &FetchArgs, seed: u64) -> Result<(), CliError> {
    let data = match &a.raw {
        Some(raw) => {
            require_file(raw)?;
            fetch::convert_breast_cancer(raw, &a.out)?
        }
        None => fetch::write_synthetic(&a.out, a.normals, a.anomalies, seed)?,
    };
    println!(
        "{}: {} rows ({} normal, {} anomalous), {} features -> {}",
        data.name,
        data.len(),
        data.num_normals(),
        data.num_anomalies(),
        data.dim(),
        a.out.display()
    );
    Ok(())
}
