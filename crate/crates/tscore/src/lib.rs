//! File formats, the experiment runner and the `tscore` command line on top
//! of [`tscore_core`].
//!
//! Formats:
//! - datasets: CSV with a header and a `label` column (0 normal, 1 anomaly)
//! - models: `TSCORE-MODEL 1` header line followed by a JSON body
//! - experiment results: JSON lines, one [`EvalRecord`](tscore_core::EvalRecord) per line (`"v": 1`)
//! - summaries, grids and sweeps: plain CSV

pub mod cli;
pub mod config;
pub mod csv_io;
pub mod experiment;
pub mod fetch;
pub mod model_file;
pub mod pool;
pub mod results;
pub mod toy;
