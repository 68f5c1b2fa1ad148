//! Model persistence: a `TSCORE-MODEL <version>` header line followed by a
//! JSON document holding the configuration, all weights, the prior, σ²_RE,
//! the final loss and the optional feature normalizer.

use std::fs;
use std::io::Write;
use std::path::Path;

use tscore_core::TrainedModel;

pub const MAGIC: &str = "TSCORE-MODEL";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ModelFileError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: not a model file (missing '{MAGIC}' header)")]
    BadMagic { path: String },
    #[error("{path}: unsupported model file version {found} (expected {VERSION})")]
    Version { path: String, found: String },
    #[error("{path}: malformed model body: {source}")]
    Body {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Invalid {
        path: String,
        #[source]
        source: tscore_core::Error,
    },
}

pub fn to_string(model: &TrainedModel) -> String {
    let body = serde_json::to_string_pretty(model).expect("model serializes");
    format!("{MAGIC} {VERSION}\n{body}\n")
}

pub fn from_str(text: &str, path: &Path) -> Result<TrainedModel, ModelFileError> {
    let p = || path.display().to_string();
    let (head, body) = text.split_once('\n').unwrap_or((text, ""));
    let mut parts = head.split_whitespace();
    if parts.next() != Some(MAGIC) {
        return Err(ModelFileError::BadMagic { path: p() });
    }
    let version = parts.next().unwrap_or("");
    if version != VERSION.to_string() {
        return Err(ModelFileError::Version {
            path: p(),
            found: version.to_string(),
        });
    }
    let model: TrainedModel = serde_json::from_str(body).map_err(|source| ModelFileError::Body { path: p(), source })?;
    model.validate().map_err(|source| ModelFileError::Invalid { path: p(), source })?;
    Ok(model)
}

/// Writes atomically (temporary file, then rename).
pub fn save(path: &Path, model: &TrainedModel) -> Result<(), ModelFileError> {
    let io = |source| ModelFileError::Io {
        path: path.display().to_string(),
        source,
    };
    let tmp = path.with_extension("model.tmp");
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(to_string(model).as_bytes()).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

pub fn load(path: &Path) -> Result<TrainedModel, ModelFileError> {
    let text = fs::read_to_string(path).map_err(|source| ModelFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    from_str(&text, path)
}
