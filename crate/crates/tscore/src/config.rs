//! TOML configuration files for `train` (a [`TrainConfig`]) and
//! `experiment` (a [`HyperGrid`]). Keys match the struct fields; missing keys
//! take their defaults, unknown keys are rejected.
//!
//! ```toml
//! hidden_widths = [32]
//! latent_dims = [2, 4]
//! mixture_components = [1, 4]
//! kernel_widths = [1.0]
//! betas = [0.1, 1.0]
//! prior = "vmf-mixture"
//! steps = 3000
//! ```

use std::path::Path;

use anyhow::Context;
use serde::de::DeserializeOwned;
use tscore_core::{HyperGrid, TrainConfig};

fn load<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn load_grid(path: &Path) -> anyhow::Result<HyperGrid> {
    load(path)
}

pub fn load_train_config(path: &Path) -> anyhow::Result<TrainConfig> {
    load(path)
}
