//! Conversion of raw benchmark files into the labelled CSV format, and the
//! synthetic stand-in used when the real data is not available.
//!
//! The UCI "Breast Cancer Wisconsin (Original)" file
//! (`breast-cancer-wisconsin.data`) has no header and eleven columns: sample
//! id, nine integer cytology features in 1..=10, and the class (2 benign,
//! 4 malignant). Conversion drops the id and rows with missing values (`?`),
//! maps benign → 0 (normal) and malignant → 1 (anomaly).

use std::path::Path;

use anyhow::{bail, Context};
use tscore_core::data::synthetic_manifold;
use tscore_core::{Dataset, Matrix};

use crate::csv_io::save_csv;

pub const BREAST_CANCER_FEATURES: [&str; 9] = [
    "clump_thickness",
    "uniformity_cell_size",
    "uniformity_cell_shape",
    "marginal_adhesion",
    "single_epithelial_cell_size",
    "bare_nuclei",
    "bland_chromatin",
    "normal_nucleoli",
    "mitoses",
];

pub const BREAST_CANCER_URL: &str =
    "https://archive.ics.uci.edu/ml/machine-learning-databases/breast-cancer-wisconsin/breast-cancer-wisconsin.data";

/// Parses the raw UCI file; returns the dataset and the number of rows skipped
/// for missing values.
pub fn parse_breast_cancer(text: &str) -> anyhow::Result<(Dataset, usize)> {
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut skipped = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 11 {
            bail!("line {}: expected 11 fields, found {}", i + 1, fields.len());
        }
        if fields.contains(&"?") {
            skipped += 1;
            continue;
        }
        for (j, f) in fields[1..10].iter().enumerate() {
            let v: f64 = f
                .parse()
                .with_context(|| format!("line {}: feature {} is not a number: '{f}'", i + 1, BREAST_CANCER_FEATURES[j]))?;
            data.push(v);
        }
        labels.push(match fields[10] {
            "2" => 0,
            "4" => 1,
            c => bail!("line {}: class must be 2 or 4, got '{c}'", i + 1),
        });
    }
    let features = Matrix::from_vec(labels.len(), 9, data)?;
    let names = BREAST_CANCER_FEATURES.iter().map(|s| s.to_string()).collect();
    Ok((
        Dataset::with_feature_names("breast-cancer-wisconsin", features, labels, names)?,
        skipped,
    ))
}

pub fn convert_breast_cancer(raw: &Path, out: &Path) -> anyhow::Result<Dataset> {
    let text = std::fs::read_to_string(raw).with_context(|| format!("reading {}", raw.display()))?;
    let (data, _) = parse_breast_cancer(&text).with_context(|| format!("parsing {}", raw.display()))?;
    save_csv(out, &data)?;
    Ok(data)
}

pub fn write_synthetic(out: &Path, normals: usize, anomalies: usize, seed: u64) -> anyhow::Result<Dataset> {
    let data = synthetic_manifold(normals, anomalies, seed)?;
    save_csv(out, &data)?;
    Ok(data)
}
