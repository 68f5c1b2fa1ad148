//! End-to-end acceptance run: one line per criterion, then a single verdict.
//!
//! Artifacts (toy grid, experiment results, sweep table) are left under
//! `$CARGO_TARGET_TMPDIR/acceptance` for the plotting scripts.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::Rng;
use tscore::csv_io::load_csv;
use tscore::experiment::{latent_sweep, run_experiment, write_sweep, ExperimentSpec, SweepSpec};
use tscore::{fetch, toy};
use tscore_core::harness::interquartile_range;
use tscore_core::linalg::Matrix;
use tscore_core::mlp::{Activation, Dense, MlpNetwork};
use tscore_core::prior::{Prior, PriorKind};
use tscore_core::rng::seeded;
use tscore_core::score::{decoder_jacobian, proposed_score, pseudo_det};
use tscore_core::train::{flatten_params, unflatten_params, wae_loss_grad, wae_loss_with_noise};
use tscore_core::{auc, mmd2_unbiased, HyperGrid, Regime, ScoreKind, ScoreOptions, TrainConfig, TrainedModel};

const MASTER_SEED: u64 = 42;
const DESK_STEPS: usize = 3000;

struct Outcome {
    id: usize,
    pass: bool,
    /// Reported but not part of the verdict.
    informational: bool,
    detail: String,
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    tscore_core::rng::standard_normal(rng)
}

fn random_net(rng: &mut impl Rng, dims: &[usize]) -> MlpNetwork {
    let hidden = &dims[1..dims.len() - 1];
    let mut net = MlpNetwork::init(dims[0], hidden, dims[dims.len() - 1], Activation::Swish, Activation::Linear, rng).unwrap();
    let mut p = Vec::new();
    net.write_params(&mut p);
    p.iter_mut().for_each(|v| *v += rng.random_range(-0.3..0.3));
    net.read_params(&p).unwrap();
    net
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let kinds = [PriorKind::StandardNormal, PriorKind::GaussianMixture, PriorKind::VmfMixture];
    for seed in 0..20u64 {
        let mut rng = seeded(1000 + seed);
        let kind = kinds[seed as usize % 3];
        let (n, d) = (6, 5);
        let k = if kind == PriorKind::VmfMixture { 3 } else { 2 };
        let enc = random_net(&mut rng, &[d, 6, 6, 6, k]);
        let dec = random_net(&mut rng, &[k, 6, 6, 6, d]);
        let scale = if kind == PriorKind::VmfMixture { 4.0 } else { 0.8 };
        let mut prior = Prior::init(kind, k, 3, scale, &mut rng).unwrap();
        if kind == PriorKind::GaussianMixture {
            let mut p = Vec::new();
            prior.write_params(&mut p);
            p.iter_mut().for_each(|v| *v += rng.random_range(-0.5..0.5));
            prior.read_params(&p).unwrap();
        }
        let batch = Matrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
        let noise = prior.draw_noise(n, &mut rng);
        let (beta, c) = (rng.random_range(0.5..2.0), [0.1, 1.0][seed as usize % 2]);
        let (_, analytic) = wae_loss_grad(&enc, &dec, &prior, &batch, &noise, beta, c).unwrap();
        let mut params = flatten_params(&enc, &dec, &prior);
        let (mut e, mut dd, mut p) = (enc.clone(), dec.clone(), prior.clone());
        let h = 1e-5;
        for (i, &a) in analytic.iter().enumerate() {
            let orig = params[i];
            let mut eval = |v: f64, params: &mut Vec<f64>| {
                params[i] = v;
                unflatten_params(&mut e, &mut dd, &mut p, params).unwrap();
                wae_loss_with_noise(&e, &dd, &p, &batch, &noise, beta, c).unwrap().total
            };
            let up = eval(orig + h, &mut params);
            let down = eval(orig - h, &mut params);
            params[i] = orig;
            let num = (up - down) / (2.0 * h);
            // relative error, with an absolute floor for gradients that vanish
            let rel = (a - num).abs() / a.abs().max(num.abs()).max(1e-4);
            worst = worst.max(rel);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        id: 1,
        pass: worst < 1e-4 && secs < 30.0,
        informational: false,
        detail: format!("20 seeds, all priors: worst rel. err {worst:.2e}, {secs:.1} s"),
    }
}

fn jacobians() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let mut rng = seeded(2000 + seed);
        let k = rng.random_range(1..=8);
        let d = rng.random_range(k..=16);
        let dec = random_net(&mut rng, &[k, 16, 16, 16, d]);
        let z: Vec<f64> = (0..k).map(|_| rng.random_range(-1.5..1.5)).collect();
        let j = decoder_jacobian(&dec, &z).unwrap();
        let h = 1e-6;
        for c in 0..k {
            let (mut up, mut down) = (z.clone(), z.clone());
            up[c] += h;
            down[c] -= h;
            let (fu, fd) = (dec.eval(&up).unwrap(), dec.eval(&down).unwrap());
            for r in 0..d {
                worst = worst.max((j[(r, c)] - (fu[r] - fd[r]) / (2.0 * h)).abs());
            }
        }
    }
    Outcome {
        id: 2,
        pass: worst < 1e-5,
        informational: false,
        detail: format!("20 swish decoders: max |J - FD| {worst:.2e}"),
    }
}

fn gram(j: &Matrix) -> Matrix {
    let (d, k) = j.shape();
    Matrix::from_fn(k, k, |a, b| (0..d).map(|r| j[(r, a)] * j[(r, b)]).sum())
}

/// log det of a symmetric positive definite matrix by Cholesky.
fn spd_log_det(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|t| l[i][t] * l[j][t]).sum();
            if i == j {
                l[i][i] = (a[(i, i)] - s).sqrt();
            } else {
                l[i][j] = (a[(i, j)] - s) / l[j][j];
            }
        }
    }
    2.0 * (0..n).map(|i| l[i][i].ln()).sum::<f64>()
}

fn pseudo_determinant() -> Outcome {
    let mut rng = seeded(3000);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let k = rng.random_range(1..=8);
        let d = rng.random_range(k..=16);
        let j = Matrix::from_fn(d, k, |_, _| gaussian(&mut rng));
        let lv = pseudo_det(&j, 1e-12).unwrap().log_volume;
        worst = worst.max((lv - 0.5 * spd_log_det(&gram(&j))).abs());
    }
    Outcome {
        id: 3,
        pass: worst < 1e-8,
        informational: false,
        detail: format!("100 matrices up to 16x8: max error {worst:.2e}"),
    }
}

fn orthonormal_basis(rng: &mut impl Rng, d: usize) -> Matrix {
    let mut cols: Vec<Vec<f64>> = (0..d).map(|_| (0..d).map(|_| gaussian(rng)).collect()).collect();
    for j in 0..d {
        let (done, rest) = cols.split_at_mut(j);
        let cj = &mut rest[0];
        for ci in done.iter() {
            let p: f64 = ci.iter().zip(cj.iter()).map(|(a, b)| a * b).sum();
            cj.iter_mut().zip(ci).for_each(|(v, w)| *v -= p * w);
        }
        let n = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        cols[j].iter_mut().for_each(|v| *v /= n);
    }
    Matrix::from_fn(d, d, |i, j| cols[j][i])
}

fn linear_gaussian() -> Outcome {
    let mut rng = seeded(4000);
    let (d, k, sigma2) = (6, 2, 0.3);
    // the first k columns of Q are the decoder, the rest span the normal space
    let q = orthonormal_basis(&mut rng, d);
    let a = Matrix::from_fn(d, k, |i, j| q[(i, j)]);
    let b: Vec<f64> = (0..d).map(|_| gaussian(&mut rng)).collect();
    let enc_bias: Vec<f64> = a.transpose().mul_vec(&b).unwrap().iter().map(|v| -v).collect();
    let linear = |w: Matrix, bias: Vec<f64>| MlpNetwork::new(vec![Dense::new(w, bias, Activation::Linear).unwrap()]).unwrap();
    let model = TrainedModel {
        config: TrainConfig {
            latent_dim: k,
            beta: sigma2,
            prior_kind: PriorKind::StandardNormal,
            ..TrainConfig::default()
        },
        encoder: linear(a.transpose(), enc_bias),
        decoder: linear(a.clone(), b.clone()),
        prior: Prior::standard_normal(k).unwrap(),
        residual_variance: sigma2,
        final_loss: 0.0,
        normalizer: None,
    };
    let log_density = |x: &[f64]| {
        let c: Vec<f64> = x.iter().zip(&b).map(|(x, b)| x - b).collect();
        let coord = |j: usize| (0..d).map(|i| q[(i, j)] * c[i]).sum::<f64>();
        let z2: f64 = (0..k).map(|j| coord(j).powi(2)).sum();
        let w2: f64 = (k..d).map(|j| coord(j).powi(2)).sum();
        -0.5 * k as f64 * (2.0 * PI).ln() - 0.5 * z2 - 0.5 * (d - k) as f64 * (2.0 * PI * sigma2).ln() - 0.5 * w2 / sigma2
    };
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let x1: Vec<f64> = (0..d).map(|_| 2.0 * gaussian(&mut rng)).collect();
        let x2: Vec<f64> = (0..d).map(|_| 2.0 * gaussian(&mut rng)).collect();
        let s = proposed_score(&model, &x1, sigma2).unwrap().total - proposed_score(&model, &x2, sigma2).unwrap().total;
        worst = worst.max((s - (log_density(&x1) - log_density(&x2))).abs());
    }
    Outcome {
        id: 4,
        pass: worst < 1e-6,
        informational: false,
        detail: format!("100 point pairs: max difference error {worst:.2e}"),
    }
}

fn auc_oracle() -> Outcome {
    let mut rng = seeded(5000);
    let mut exact = true;
    let mut invariant = true;
    for _ in 0..50 {
        let n = rng.random_range(2..=200);
        let mut labels: Vec<u8> = (0..n).map(|_| rng.random_bool(0.3) as u8).collect();
        labels[0] = 0;
        labels[1] = 1;
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..15) as f64 * 0.25 - 1.0).collect();
        // lower score = more anomalous; ties count half
        let (mut wins, mut pairs) = (0.0, 0.0);
        for i in (0..n).filter(|&i| labels[i] == 1) {
            for j in (0..n).filter(|&j| labels[j] == 0) {
                pairs += 1.0;
                if scores[i] < scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
        let a = auc(&scores, &labels).unwrap();
        exact &= a == wins / pairs;
        let affine: Vec<f64> = scores.iter().map(|s| 3.0 * s - 7.0).collect();
        let exp: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
        invariant &= auc(&affine, &labels).unwrap().to_bits() == a.to_bits();
        invariant &= auc(&exp, &labels).unwrap().to_bits() == a.to_bits();
    }
    Outcome {
        id: 5,
        pass: exact && invariant,
        informational: false,
        detail: format!("50 tied instances: exact {exact}, transform-invariant {invariant}"),
    }
}

fn toy_figure(out: &Path) -> Outcome {
    let start = Instant::now();
    let spec = toy::ToySpec {
        seed: MASTER_SEED,
        ..toy::ToySpec::default()
    };
    let model = toy::train_toy(&spec).unwrap();
    let train_secs = start.elapsed().as_secs_f64();
    let grid = toy::heatmap(&model, spec.resolution).unwrap();
    tscore::csv_io::save_grid(&out.join("toy_grid.csv"), &grid).unwrap();
    let probes = toy::make_probes(&model, MASTER_SEED).unwrap();
    let proposed = toy::probe_auc(&model, &probes, ScoreKind::ProposedDecoder).unwrap();
    let re = toy::probe_auc(&model, &probes, ScoreKind::ReconstructionError).unwrap();
    let pz = toy::probe_auc(&model, &probes, ScoreKind::LatentLikelihood).unwrap();
    Outcome {
        id: 6,
        pass: proposed >= 0.9 && proposed > re && train_secs < 300.0,
        informational: false,
        detail: format!(
            "probe AUC proposed {proposed:.4} vs re {re:.4} (pz {pz:.4}); training {train_secs:.0} s; grid {} rows",
            grid.rows.len()
        ),
    }
}

fn desk_experiment(data_path: &Path, out: &Path) -> (Outcome, Outcome) {
    let start = Instant::now();
    let data = load_csv(data_path).unwrap();
    let spec = ExperimentSpec {
        grid: HyperGrid {
            hidden_widths: vec![32],
            latent_dims: vec![2, 4],
            mixture_components: vec![1, 4],
            kernel_widths: vec![1.0],
            betas: vec![0.1, 1.0],
            steps: DESK_STEPS,
            ..HyperGrid::default()
        },
        splits: 5,
        kinds: vec![ScoreKind::ReconstructionError, ScoreKind::ProposedDecoder],
        seed: MASTER_SEED,
        jobs: tscore::pool::default_jobs(),
        score: ScoreOptions::default(),
        save_models: true,
    };
    let results = out.join("experiment.jsonl");
    let _ = std::fs::remove_file(&results);
    let o = run_experiment(&data, &spec, &results).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let mean = |regime, kind| o.summary_for(regime, kind).map_or(f64::NAN, |r| r.mean);
    let (sp, sr) = (
        mean(Regime::Supervised, ScoreKind::ProposedDecoder),
        mean(Regime::Supervised, ScoreKind::ReconstructionError),
    );
    let (up, ur) = (
        mean(Regime::Unsupervised, ScoreKind::ProposedDecoder),
        mean(Regime::Unsupervised, ScoreKind::ReconstructionError),
    );
    let complete = o.configs == 8 && o.records.len() == 8 * 5 * 2 && o.records.iter().all(|r| !r.failed);
    (
        Outcome {
            id: 7,
            pass: complete && sp >= sr && secs < 1800.0,
            informational: false,
            detail: format!(
                "{}: supervised mean test AUC proposed {sp:.4} vs re {sr:.4}; {} records, {secs:.0} s",
                data.name,
                o.records.len()
            ),
        },
        Outcome {
            id: 8,
            pass: up.is_finite() && ur.is_finite() && up >= ur,
            informational: true,
            detail: format!("unsupervised mean test AUC proposed {up:.4} vs re {ur:.4} (reported only)"),
        },
    )
}

fn sweep(data_path: &Path, out: &Path) -> Outcome {
    let data = load_csv(data_path).unwrap();
    let dims: Vec<usize> = (1..=8).collect();
    let spec = SweepSpec {
        base: TrainConfig {
            prior_kind: PriorKind::GaussianMixture,
            steps: DESK_STEPS,
            ..TrainConfig::default()
        },
        latent_dims: dims.clone(),
        splits: 5,
        kinds: vec![ScoreKind::ReconstructionError, ScoreKind::ProposedDecoder],
        seed: MASTER_SEED,
        jobs: tscore::pool::default_jobs(),
        score: ScoreOptions::default(),
    };
    let rows = latent_sweep(&data, &spec).unwrap();
    write_sweep(&out.join("sweep.csv"), &rows).unwrap();
    let complete = rows.len() == 8 * 5 * 2 && rows.iter().all(|r| r.test_auc.is_some());
    let per_k = |kind: ScoreKind| -> Vec<f64> {
        dims.iter()
            .map(|&k| {
                let v: Vec<f64> = rows.iter().filter(|r| r.k == k && r.kind == kind).filter_map(|r| r.test_auc).collect();
                v.iter().sum::<f64>() / v.len() as f64
            })
            .collect()
    };
    let (re, pr) = (per_k(ScoreKind::ReconstructionError), per_k(ScoreKind::ProposedDecoder));
    let (iqr_re, iqr_pr) = (interquartile_range(&re).unwrap(), interquartile_range(&pr).unwrap());
    let fmt = |v: &[f64]| v.iter().map(|a| format!("{a:.3}")).collect::<Vec<_>>().join(" ");
    Outcome {
        id: 9,
        pass: complete && iqr_re < iqr_pr,
        informational: false,
        detail: format!(
            "IQR over k of mean test AUC: re {iqr_re:.4} vs proposed {iqr_pr:.4}; re [{}], proposed [{}]",
            fmt(&re),
            fmt(&pr)
        ),
    }
}

fn mmd() -> Outcome {
    let mut rng = seeded(10_000);
    let sample = |rng: &mut _, shift: f64| Matrix::from_fn(1000, 2, |_, _| gaussian(rng) + shift);
    let (x, y) = (sample(&mut rng, 0.0), sample(&mut rng, 0.0));
    let null = mmd2_unbiased(&x, &y, 1.0).unwrap();
    let far = mmd2_unbiased(&x, &sample(&mut rng, 3.0), 1.0).unwrap();
    Outcome {
        id: 10,
        pass: null.abs() < 0.05 && far > 0.3,
        informational: false,
        detail: format!("n = 1000: null {null:.2e}, shifted {far:.4}"),
    }
}

fn tscore_cli(args: &[&str]) {
    let o = Command::new(env!("CARGO_BIN_EXE_tscore"))
        .args(args)
        .env_remove("TSCORE_SEED")
        .output()
        .unwrap();
    assert!(o.status.success(), "tscore {args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

/// Every data file under `dir` with per-record wall times zeroed.
fn outputs(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
                continue;
            }
            let mut bytes = std::fs::read(&p).unwrap();
            if p.extension().is_some_and(|e| e == "jsonl") {
                let text: String = String::from_utf8(bytes)
                    .unwrap()
                    .lines()
                    .map(|l| {
                        let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                        v["wall_time"] = 0.0.into();
                        v.to_string() + "\n"
                    })
                    .collect();
                bytes = text.into_bytes();
            }
            files.push((p.strip_prefix(dir).unwrap().to_path_buf(), bytes));
        }
    }
    files.sort();
    files
}

fn cli_run(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    std::fs::create_dir_all(dir).unwrap();
    let path = |name: &str| dir.join(name).display().to_string();
    let raw = dir.join("raw.data");
    let mut text = String::new();
    for i in 0..60 {
        let class = if i % 5 == 0 { 4 } else { 2 };
        let f: Vec<String> = (0..9).map(|j| ((i * 7 + j * 3) % 10 + 1).to_string()).collect();
        let mut cells = f.join(",");
        if i == 13 {
            cells = cells.replacen('1', "?", 1);
        }
        text.push_str(&format!("{},{cells},{class}\n", 1000 + i));
    }
    std::fs::write(&raw, text).unwrap();
    let grid = dir.join("grid.toml");
    std::fs::write(&grid, "hidden_widths = [8]\nlatent_dims = [2, 3]\nmixture_components = [1]\nkernel_widths = [1.0]\nbetas = [1.0]\nsteps = 40\n").unwrap();

    let seed = ["--seed", "11"];
    let run = |args: &[&str]| tscore_cli(&[args, &seed[..]].concat());
    run(&["fetch-data", "--raw", &raw.display().to_string(), "--out", &path("bc.csv")]);
    run(&["fetch-data", "--synthetic", "--normals", "200", "--anomalies", "40", "--out", &path("syn.csv")]);
    run(&["train", "--data", &path("syn.csv"), "--steps", "40", "--normals-only", "--out", &path("m.model")]);
    run(&[
        "score", "--model", &path("m.model"), "--data", &path("syn.csv"), "--kinds", "re,pz,proposed,proposed_enc",
        "--refine-steps", "5", "--refine-restarts", "2", "--out", &path("scored.csv"),
    ]);
    run(&[
        "experiment", "--data", &path("syn.csv"), "--grid", &grid.display().to_string(), "--splits", "2", "--jobs", "2",
        "--out", &path("exp.jsonl"),
    ]);
    run(&["toy-figure", "--samples", "200", "--steps", "40", "--resolution", "10", "--out", &path("toy.csv"), "--probes", &path("probes.csv")]);
    run(&["latent-sweep", "--data", &path("syn.csv"), "--k", "1..3", "--splits", "2", "--steps", "40", "--out", &path("sweep.csv")]);
    outputs(dir)
}

fn determinism(root: &Path) -> Outcome {
    let a = cli_run(&root.join("run-a"));
    let b = cli_run(&root.join("run-b"));
    let names_match = a.iter().map(|f| &f.0).eq(b.iter().map(|f| &f.0));
    let differing: Vec<String> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.display().to_string())
        .collect();
    Outcome {
        id: 11,
        pass: names_match && differing.is_empty() && a.len() >= 10,
        informational: false,
        detail: if differing.is_empty() {
            format!("6 commands twice: {} output files byte-identical", a.len())
        } else {
            format!("differing outputs: {}", differing.join(", "))
        },
    }
}

#[test]
fn acceptance() {
    let out = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let _ = std::fs::remove_dir_all(&out);
    std::fs::create_dir_all(&out).unwrap();
    let data_path = out.join("synthetic-manifold.csv");
    fetch::write_synthetic(&data_path, 500, 100, MASTER_SEED).unwrap();

    let mut outcomes = vec![gradients(), jacobians(), pseudo_determinant(), linear_gaussian(), auc_oracle(), toy_figure(&out)];
    let (supervised, unsupervised) = desk_experiment(&data_path, &out);
    outcomes.push(supervised);
    outcomes.push(unsupervised);
    outcomes.push(sweep(&data_path, &out));
    outcomes.push(mmd());
    outcomes.push(determinism(&out.join("determinism")));

    println!();
    for o in &outcomes {
        let tag = match (o.pass, o.informational) {
            (true, _) => "PASS",
            (false, true) => "NOTE",
            (false, false) => "FAIL",
        };
        println!("[{tag}] criterion {:>2}: {}", o.id, o.detail);
    }
    let failed: Vec<usize> = outcomes.iter().filter(|o| !o.pass && !o.informational).map(|o| o.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
