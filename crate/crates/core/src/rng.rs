//! Seed derivation and the generator used throughout the crate.

use core::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::math;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent seed for work unit `(stream, index)` under `master`.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    mix64(mix64(mix64(master) ^ stream.wrapping_mul(0x2545_f491_4f6c_dd1d)) ^ index)
}

// The samplers below use `libm` directly rather than a distributions crate:
// those route float math through whichever backend feature unification
// picks, which changed results between `cargo build` and workspace test builds.

/// Uniform on `(0, 1]`.
fn open_unit<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Standard normal draw (Box–Muller, one value per two uniforms).
pub fn standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    let r = math::sqrt(-2.0 * math::ln(open_unit(rng)));
    r * math::cos(2.0 * PI * rng.random::<f64>())
}

/// Gamma(shape, 1) draw (Marsaglia–Tsang; boosted for shape < 1).
pub fn gamma<R: rand::Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    debug_assert!(shape > 0.0);
    if shape < 1.0 {
        let g = gamma(shape + 1.0, rng);
        return g * libm::pow(open_unit(rng), 1.0 / shape);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / math::sqrt(9.0 * d);
    loop {
        let x = standard_normal(rng);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = open_unit(rng);
        if math::ln(u) < 0.5 * x * x + d - d * v + d * math::ln(v) {
            return d * v;
        }
    }
}

/// Beta(a, b) draw via two gamma variates.
pub fn beta<R: rand::Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let x = gamma(a, rng);
    let y = gamma(b, rng);
    x / (x + y)
}

/// Stable named streams for [`derive_seed`].
pub mod stream {
    pub const SPLIT: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const REFINE: u64 = 3;
    pub const DATA: u64 = 4;
}
