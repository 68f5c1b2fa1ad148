//! Monte Carlo checks of the MMD estimator and the prior densities/samplers.

use std::f64::consts::PI;

use rand::Rng;
use tscore_core::linalg::Matrix;
use tscore_core::prior::Prior;
use tscore_core::rng::seeded;
use tscore_core::mmd2_unbiased;

fn normal_matrix(rng: &mut impl Rng, n: usize, k: usize, shift: f64) -> Matrix {
    Matrix::from_fn(n, k, |_, _| {
        let v = tscore_core::rng::standard_normal(rng);
        v + shift
    })
}

#[test]
fn mmd_null_and_separation() {
    let mut rng = seeded(1);
    let x = normal_matrix(&mut rng, 1000, 2, 0.0);
    let z = normal_matrix(&mut rng, 1000, 2, 0.0);
    assert!(mmd2_unbiased(&x, &z, 1.0).unwrap().abs() < 0.05);
    let far = normal_matrix(&mut rng, 1000, 2, 3.0);
    assert!(mmd2_unbiased(&x, &far, 1.0).unwrap() > 0.3);
}

#[test]
fn mmd_null_is_unbiased() {
    let mut rng = seeded(2);
    let vals: Vec<f64> = (0..100)
        .map(|_| mmd2_unbiased(&normal_matrix(&mut rng, 50, 2, 0.0), &normal_matrix(&mut rng, 50, 2, 0.0), 1.0).unwrap())
        .collect();
    let mean = vals.iter().sum::<f64>() / 100.0;
    let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 99.0).sqrt();
    assert!(mean.abs() < 3.0 * sd / 10.0, "mean {mean}, stderr {}", sd / 10.0);
}

#[test]
fn standard_normal_sample_mean() {
    let mut rng = seeded(3);
    let p = Prior::standard_normal(3).unwrap();
    let n = 10_000;
    let s = p.sample(n, &mut rng).unwrap();
    for j in 0..3 {
        let m = s.col_to_vec(j).iter().sum::<f64>() / n as f64;
        assert!(m.abs() < 4.0 / (n as f64).sqrt());
    }
}

#[test]
fn vmf_sample_mean_direction() {
    let mut rng = seeded(4);
    let mu = vec![0.2, -0.5, 0.8];
    let p = Prior::vmf_mixture(vec![mu.clone()], 50.0).unwrap();
    let s = p.sample(10_000, &mut rng).unwrap();
    let mean: Vec<f64> = (0..3).map(|j| s.col_to_vec(j).iter().sum::<f64>()).collect();
    let mn = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mun = mu.iter().map(|v| v * v).sum::<f64>().sqrt();
    let cos = mean.iter().zip(&mu).map(|(a, b)| a * b).sum::<f64>() / (mn * mun);
    assert!(cos.min(1.0).acos() < 0.05);
    for r in s.row_iter() {
        assert!((r.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn gaussian_mixture_integrates_to_one() {
    let p = Prior::gaussian_mixture(vec![vec![0.0, 0.0], vec![1.5, -1.0], vec![-2.0, 0.5]], 0.7).unwrap();
    let (lo, hi, m) = (-9.0, 9.0, 400);
    let h = (hi - lo) / m as f64;
    let mut total = 0.0;
    for i in 0..m {
        for j in 0..m {
            let z = [lo + (i as f64 + 0.5) * h, lo + (j as f64 + 0.5) * h];
            total += p.log_density(&z).unwrap().exp() * h * h;
        }
    }
    assert!((total - 1.0).abs() < 0.02, "{total}");
}

#[test]
fn vmf_mixture_integrates_to_one_on_the_sphere() {
    let mut rng = seeded(5);
    let p = Prior::vmf_mixture(vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.6, 0.8]], 5.0).unwrap();
    let area = 4.0 * PI;
    let n = 200_000;
    let mut total = 0.0;
    for _ in 0..n {
        let v: Vec<f64> = (0..3).map(|_| tscore_core::rng::standard_normal(&mut rng)).collect();
        total += p.log_density(&v).unwrap().exp();
    }
    let integral = total / n as f64 * area;
    assert!((integral - 1.0).abs() < 0.02, "{integral}");
}

#[test]
fn vmf_with_zero_concentration_is_uniform_on_the_circle() {
    let p = Prior::vmf_mixture(vec![vec![0.3, 0.4]], 0.0).unwrap();
    for z in [[1.0, 0.0], [0.0, -2.0], [0.6, 0.8]] {
        assert!((p.log_density(&z).unwrap() + (2.0 * PI).ln()).abs() < 1e-12);
    }
}

#[test]
fn mixture_lies_between_its_components() {
    let mut rng = seeded(6);
    let p = Prior::init(tscore_core::PriorKind::GaussianMixture, 2, 4, 1.0, &mut rng).unwrap();
    let same = Prior::gaussian_mixture(vec![vec![0.3, -0.2]; 4], 1.0).unwrap();
    let single = Prior::gaussian_mixture(vec![vec![0.3, -0.2]], 1.0).unwrap();
    for _ in 0..200 {
        let z = [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
        let comps: Vec<f64> = (0..4).map(|c| p.component_log_density(c, &z).unwrap()).collect();
        let lo = comps.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = comps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let v = p.log_density(&z).unwrap();
        assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        assert!((same.log_density(&z).unwrap() - single.log_density(&z).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn kernel_density_estimate_agrees_with_log_density() {
    let mut rng = seeded(7);
    let p = Prior::gaussian_mixture(vec![vec![-1.0, 0.0], vec![1.0, 0.5]], 0.5).unwrap();
    let s = p.sample(40_000, &mut rng).unwrap();
    let bw: f64 = 0.12;
    for z in [[-1.0, 0.0], [1.0, 0.5], [0.0, 0.25], [-0.5, -0.5]] {
        let kde = s
            .row_iter()
            .map(|r| (-((r[0] - z[0]).powi(2) + (r[1] - z[1]).powi(2)) / (2.0 * bw * bw)).exp())
            .sum::<f64>()
            / (s.rows() as f64 * 2.0 * PI * bw * bw);
        let diff = (kde.ln() - p.log_density(&z).unwrap()).abs();
        assert!(diff < 0.1, "at {z:?}: {diff}");
    }
}
