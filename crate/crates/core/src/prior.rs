//! Latent priors `p(z)`: standard normal, Gaussian mixtures and mixtures of
//! von Mises–Fisher distributions on the unit sphere.
//!
//! Sampling is split into drawing parameter-free noise ([`PriorNoise`]) and a
//! deterministic transform of that noise by the component locations, so that
//! gradients reach the locations through the samples:
//!
//! - Gaussian component: `z = m_c + sqrt(var_c) · ε`
//! - vMF component: `y` is drawn around `e₁` (Wood's rejection sampler for the
//!   axis coordinate, uniform tangent direction) and reflected onto `μ_c` with
//!   the Householder map sending `e₁` to `μ_c`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;

use crate::linalg::Matrix;
use crate::math;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum PriorKind {
    StandardNormal,
    GaussianMixture,
    VmfMixture,
}

impl PriorKind {
    pub fn name(self) -> &'static str {
        match self {
            PriorKind::StandardNormal => "standard-normal",
            PriorKind::GaussianMixture => "gaussian-mixture",
            PriorKind::VmfMixture => "vmf-mixture",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "standard-normal" => Some(PriorKind::StandardNormal),
            "gaussian-mixture" => Some(PriorKind::GaussianMixture),
            "vmf-mixture" => Some(PriorKind::VmfMixture),
            _ => None,
        }
    }

    /// Whether latent codes live on the unit sphere.
    pub fn is_spherical(self) -> bool {
        self == PriorKind::VmfMixture
    }
}

/// One mixture component: a mean (Gaussian) or unit mean direction (vMF) and
/// a variance (Gaussian) or concentration κ (vMF).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Component {
    pub location: Vec<f64>,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "RawPrior"))]
pub struct Prior {
    kind: PriorKind,
    dim: usize,
    components: Vec<Component>,
    weights: Vec<f64>,
}

#[cfg(feature = "serde")]
#[derive(serde::Deserialize)]
struct RawPrior {
    kind: PriorKind,
    dim: usize,
    components: Vec<Component>,
    weights: Vec<f64>,
}

#[cfg(feature = "serde")]
impl TryFrom<RawPrior> for Prior {
    type Error = Error;

    /// Rebuilds through the constructors so stored priors obey the same invariants.
    fn try_from(raw: RawPrior) -> Result<Self> {
        let scale = raw.components.first().map_or(1.0, |c| c.scale);
        if raw.components.iter().any(|c| c.scale != scale) {
            return Err(Error::invalid("stored prior components must share one scale"));
        }
        let locations: Vec<Vec<f64>> = raw.components.iter().map(|c| c.location.clone()).collect();
        let rebuilt = match raw.kind {
            PriorKind::StandardNormal => Prior::standard_normal(raw.dim)?,
            PriorKind::GaussianMixture => Prior::gaussian_mixture(locations, scale)?,
            PriorKind::VmfMixture => Prior::vmf_mixture(locations, scale)?,
        };
        let close = |a: &[f64], b: &[f64], tol: f64| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| math::abs(x - y) <= tol);
        let consistent = rebuilt.dim == raw.dim
            && rebuilt.components.len() == raw.components.len()
            && close(&rebuilt.weights, &raw.weights, 1e-12)
            && rebuilt
                .components
                .iter()
                .zip(&raw.components)
                .all(|(a, b)| close(&a.location, &b.location, 1e-9));
        if !consistent {
            return Err(Error::invalid("stored prior is inconsistent (dimension, weights or directions)"));
        }
        Ok(rebuilt)
    }
}

/// Parameter-free randomness behind a batch of prior samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorNoise {
    /// Component index per sample.
    pub picks: Vec<usize>,
    /// `ε` for Gaussian components, the sample around `e₁` for vMF components.
    pub base: Matrix,
}

impl Prior {
    pub fn standard_normal(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("latent dimension must be positive"));
        }
        Ok(Self {
            kind: PriorKind::StandardNormal,
            dim,
            components: vec![Component {
                location: vec![0.0; dim],
                scale: 1.0,
            }],
            weights: vec![1.0],
        })
    }

    /// Uniformly weighted Gaussian mixture with isotropic component variance.
    pub fn gaussian_mixture(means: Vec<Vec<f64>>, variance: f64) -> Result<Self> {
        let dim = check_locations(&means)?;
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::invalid("Gaussian component variance must be positive"));
        }
        let c = means.len();
        Ok(Self {
            kind: PriorKind::GaussianMixture,
            dim,
            components: means
                .into_iter()
                .map(|location| Component {
                    location,
                    scale: variance,
                })
                .collect(),
            weights: vec![1.0 / c as f64; c],
        })
    }

    /// Uniformly weighted vMF mixture; directions are normalized here.
    pub fn vmf_mixture(directions: Vec<Vec<f64>>, kappa: f64) -> Result<Self> {
        let dim = check_locations(&directions)?;
        if dim < 2 {
            return Err(Error::invalid("vMF prior requires latent dimension ≥ 2"));
        }
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(Error::invalid("vMF concentration must be non-negative"));
        }
        let c = directions.len();
        let mut components = Vec::with_capacity(c);
        for mut d in directions {
            let n = math::norm(&d);
            if n == 0.0 {
                return Err(Error::invalid("vMF direction must be non-zero"));
            }
            d.iter_mut().for_each(|v| *v /= n);
            components.push(Component {
                location: d,
                scale: kappa,
            });
        }
        Ok(Self {
            kind: PriorKind::VmfMixture,
            dim,
            components,
            weights: vec![1.0 / c as f64; c],
        })
    }

    /// Random initial prior of the given kind: Gaussian means `~ N(0, I)`
    /// (a single component starts at the origin), vMF directions uniform on the sphere.
    pub fn init<R: Rng + ?Sized>(
        kind: PriorKind,
        dim: usize,
        components: usize,
        scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if components == 0 {
            return Err(Error::invalid("prior needs at least one component"));
        }
        match kind {
            PriorKind::StandardNormal => Self::standard_normal(dim),
            PriorKind::GaussianMixture => {
                let means = if components == 1 {
                    vec![vec![0.0; dim]]
                } else {
                    (0..components).map(|_| standard_normal_vec(dim, rng)).collect()
                };
                Self::gaussian_mixture(means, scale)
            }
            PriorKind::VmfMixture => {
                let dirs = (0..components)
                    .map(|_| loop {
                        let v = standard_normal_vec(dim, rng);
                        if math::norm(&v) > 1e-6 {
                            break v;
                        }
                    })
                    .collect();
                Self::vmf_mixture(dirs, scale)
            }
        }
    }

    pub fn kind(&self) -> PriorKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `log p(z)`. For vMF mixtures `z` is first projected onto the unit sphere
    /// and the density is taken w.r.t. the sphere's surface measure.
    pub fn log_density(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.dim {
            return Err(Error::shape("Prior::log_density", self.dim, z.len()));
        }
        let k = self.dim as f64;
        match self.kind {
            PriorKind::StandardNormal => Ok(-0.5 * k * math::ln(2.0 * PI) - 0.5 * math::norm_sq(z)),
            PriorKind::GaussianMixture => {
                let terms: Vec<f64> = self
                    .components
                    .iter()
                    .zip(&self.weights)
                    .map(|(c, &w)| {
                        math::ln(w) - 0.5 * k * math::ln(2.0 * PI * c.scale)
                            - 0.5 * math::dist_sq(z, &c.location) / c.scale
                    })
                    .collect();
                Ok(math::log_sum_exp(&terms))
            }
            PriorKind::VmfMixture => {
                let n = math::norm(z);
                let scale = if n > 0.0 { 1.0 / n } else { 0.0 };
                let terms: Vec<f64> = self
                    .components
                    .iter()
                    .zip(&self.weights)
                    .map(|(c, &w)| {
                        let cos = math::dot(&c.location, z) * scale;
                        math::ln(w) + vmf_log_normalizer(self.dim, c.scale) + c.scale * cos
                    })
                    .collect();
                Ok(math::log_sum_exp(&terms))
            }
        }
    }

    /// Log-density of a single component, used by the bound tests and diagnostics.
    pub fn component_log_density(&self, index: usize, z: &[f64]) -> Result<f64> {
        let c = self
            .components
            .get(index)
            .ok_or_else(|| Error::invalid(format!("no component {index}")))?;
        let single = Prior {
            kind: self.kind,
            dim: self.dim,
            components: vec![c.clone()],
            weights: vec![1.0],
        };
        single.log_density(z)
    }

    pub fn draw_noise<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> PriorNoise {
        let mut picks = Vec::with_capacity(n);
        let mut base = Matrix::zeros(n, self.dim);
        for i in 0..n {
            let c = self.pick_component(rng);
            picks.push(c);
            let row = base.row_mut(i);
            match self.kind {
                PriorKind::StandardNormal | PriorKind::GaussianMixture => {
                    row.iter_mut().for_each(|v| *v = crate::rng::standard_normal(rng));
                }
                PriorKind::VmfMixture => sample_vmf_around_e1(self.dim, self.components[c].scale, rng, row),
            }
        }
        PriorNoise { picks, base }
    }

    fn pick_component<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.components.len() == 1 {
            return 0;
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        self.components.len() - 1
    }

    /// Deterministic map from noise to samples (`n × dim`).
    pub fn transform(&self, noise: &PriorNoise) -> Result<Matrix> {
        self.check_noise(noise)?;
        let mut out = noise.base.clone();
        for (i, &c) in noise.picks.iter().enumerate() {
            let comp = &self.components[c];
            let row = out.row_mut(i);
            match self.kind {
                PriorKind::StandardNormal => {}
                PriorKind::GaussianMixture => {
                    let sd = math::sqrt(comp.scale);
                    for (z, m) in row.iter_mut().zip(&comp.location) {
                        *z = m + sd * *z;
                    }
                }
                PriorKind::VmfMixture => householder_apply(&comp.location, row),
            }
        }
        Ok(out)
    }

    /// Back-propagates `∂L/∂samples` to the learnable locations, in the layout of
    /// [`write_params`](Self::write_params).
    pub fn transform_backward(&self, noise: &PriorNoise, grad: &Matrix) -> Result<Vec<f64>> {
        self.check_noise(noise)?;
        if grad.shape() != noise.base.shape() {
            return Err(Error::shape("Prior::transform_backward", noise.base.rows(), grad.rows()));
        }
        let mut out = vec![0.0; self.num_params()];
        if self.kind == PriorKind::StandardNormal {
            return Ok(out);
        }
        let k = self.dim;
        for (i, &c) in noise.picks.iter().enumerate() {
            let g = grad.row(i);
            let slot = &mut out[c * k..(c + 1) * k];
            match self.kind {
                PriorKind::GaussianMixture => {
                    for (s, gi) in slot.iter_mut().zip(g) {
                        *s += gi;
                    }
                }
                PriorKind::VmfMixture => {
                    householder_backward(&self.components[c].location, noise.base.row(i), g, slot);
                }
                PriorKind::StandardNormal => unreachable!(),
            }
        }
        Ok(out)
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Matrix> {
        if n == 0 {
            return Err(Error::invalid("sample size must be positive"));
        }
        let noise = self.draw_noise(n, rng);
        self.transform(&noise)
    }

    fn check_noise(&self, noise: &PriorNoise) -> Result<()> {
        if noise.base.cols() != self.dim || noise.picks.len() != noise.base.rows() {
            return Err(Error::shape("PriorNoise", self.dim, noise.base.cols()));
        }
        if noise.picks.iter().any(|&c| c >= self.components.len()) {
            return Err(Error::invalid("noise refers to a missing component"));
        }
        Ok(())
    }

    /// Number of learnable parameters (component locations; zero for the standard normal).
    pub fn num_params(&self) -> usize {
        match self.kind {
            PriorKind::StandardNormal => 0,
            _ => self.components.len() * self.dim,
        }
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        if self.kind == PriorKind::StandardNormal {
            return;
        }
        for c in &self.components {
            out.extend_from_slice(&c.location);
        }
    }

    /// Loads locations verbatim; call [`project`](Self::project) afterwards to
    /// restore unit-norm vMF directions.
    pub fn read_params(&mut self, params: &[f64]) -> Result<usize> {
        let n = self.num_params();
        if params.len() < n {
            return Err(Error::shape("Prior::read_params", n, params.len()));
        }
        if n == 0 {
            return Ok(0);
        }
        for (c, chunk) in self.components.iter_mut().zip(params[..n].chunks(self.dim)) {
            c.location.copy_from_slice(chunk);
        }
        Ok(n)
    }

    /// Renormalizes vMF directions to unit length.
    pub fn project(&mut self) {
        if self.kind != PriorKind::VmfMixture {
            return;
        }
        for c in &mut self.components {
            let n = math::norm(&c.location);
            if n > 0.0 {
                c.location.iter_mut().for_each(|v| *v /= n);
            } else {
                c.location.iter_mut().for_each(|v| *v = 0.0);
                c.location[0] = 1.0;
            }
        }
    }
}

fn check_locations(locs: &[Vec<f64>]) -> Result<usize> {
    let dim = locs
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::invalid("prior needs at least one component"))?;
    if dim == 0 {
        return Err(Error::invalid("latent dimension must be positive"));
    }
    for l in locs {
        if l.len() != dim {
            return Err(Error::shape("prior component", dim, l.len()));
        }
        if !l.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("prior locations must be finite"));
        }
    }
    Ok(dim)
}

fn standard_normal_vec<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| crate::rng::standard_normal(rng)).collect()
}

/// `log C_p(κ)` with `C_p(κ) = κ^{p/2-1} / ((2π)^{p/2} I_{p/2-1}(κ))`, the
/// vMF normalizer on `S^{p-1}`. At `κ = 0` it is minus the log sphere area.
pub fn vmf_log_normalizer(dim: usize, kappa: f64) -> f64 {
    if kappa == 0.0 {
        return -math::log_sphere_area(dim);
    }
    let v = 0.5 * dim as f64 - 1.0;
    v * math::ln(kappa) - 0.5 * dim as f64 * math::ln(2.0 * PI) - math::log_bessel_i(v, kappa)
}

/// Draws a vMF(e₁, κ) sample on `S^{dim-1}` into `out`.
fn sample_vmf_around_e1<R: Rng + ?Sized>(dim: usize, kappa: f64, rng: &mut R, out: &mut [f64]) {
    let m1 = (dim - 1) as f64;
    let b = m1 / (2.0 * kappa + math::sqrt(4.0 * kappa * kappa + m1 * m1));
    let x0 = (1.0 - b) / (1.0 + b);
    let c = kappa * x0 + m1 * math::ln(1.0 - x0 * x0);
    let w = loop {
        let zb = crate::rng::beta(0.5 * m1, 0.5 * m1, rng);
        let w = (1.0 - (1.0 + b) * zb) / (1.0 - (1.0 - b) * zb);
        let u: f64 = rng.random();
        if kappa * w + m1 * math::ln(1.0 - x0 * w) - c >= math::ln(u) {
            break w.clamp(-1.0, 1.0);
        }
    };
    let tangent = loop {
        let t = standard_normal_vec(dim - 1, rng);
        let n = math::norm(&t);
        if n > 1e-12 {
            break t.into_iter().map(|v| v / n).collect::<Vec<_>>();
        }
    };
    let r = math::sqrt((1.0 - w * w).max(0.0));
    out[0] = w;
    for (o, t) in out[1..].iter_mut().zip(tangent) {
        *o = r * t;
    }
}

/// Below this `‖e₁ - μ‖²` the reflection is treated as the identity.
const HOUSEHOLDER_EPS: f64 = 1e-24;

/// In-place `y ← H y` with `H = I - 2 u uᵀ / uᵀu`, `u = e₁ - μ` (so `H e₁ = μ` for unit `μ`).
fn householder_apply(mu: &[f64], y: &mut [f64]) {
    let (a, b) = householder_terms(mu, y);
    if b < HOUSEHOLDER_EPS {
        return;
    }
    let f = 2.0 * a / b;
    for (i, yi) in y.iter_mut().enumerate() {
        let ui = if i == 0 { 1.0 - mu[0] } else { -mu[i] };
        *yi -= f * ui;
    }
}

/// Returns `(uᵀy, uᵀu)`.
fn householder_terms(mu: &[f64], y: &[f64]) -> (f64, f64) {
    let mut a = 0.0;
    let mut b = 0.0;
    for i in 0..mu.len() {
        let ui = if i == 0 { 1.0 - mu[0] } else { -mu[i] };
        a += ui * y[i];
        b += ui * ui;
    }
    (a, b)
}

/// Accumulates `∂L/∂μ` for `z = H(μ) y` given `g = ∂L/∂z`.
fn householder_backward(mu: &[f64], y: &[f64], g: &[f64], out: &mut [f64]) {
    let (a, b) = householder_terms(mu, y);
    if b < HOUSEHOLDER_EPS {
        return;
    }
    let u: Vec<f64> = (0..mu.len()).map(|i| if i == 0 { 1.0 - mu[0] } else { -mu[i] }).collect();
    let ug = math::dot(&u, g);
    // ∂L/∂μ = 2 [ y (uᵀg)/b + a g / b - 2 a (uᵀg) u / b² ]
    for i in 0..mu.len() {
        out[i] += 2.0 * (y[i] * ug / b + a * g[i] / b - 2.0 * a * ug * u[i] / (b * b));
    }
}
