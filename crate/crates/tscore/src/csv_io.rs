//! Dataset and score tables as CSV.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use tscore_core::data::GridTable;
use tscore_core::{Dataset, Matrix};

pub const LABEL_COLUMN: &str = "label";

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}, column '{column}': {message}")]
    Cell {
        path: String,
        line: u64,
        column: String,
        message: String,
    },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error(transparent)]
    Data(#[from] tscore_core::Error),
}

/// Features plus an optional label column, as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub feature_names: Vec<String>,
    pub features: Matrix,
    pub labels: Option<Vec<u8>>,
}

fn format_err(path: &Path, message: impl Into<String>) -> CsvError {
    CsvError::Format {
        path: path.display().to_string(),
        message: message.into(),
    }
}

fn csv_err(path: &Path, e: csv::Error) -> CsvError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => CsvError::Io {
            path: path.display().to_string(),
            source,
        },
        kind => format_err(path, format!("line {line}: {kind:?}")),
    }
}

/// Reads a numeric table; the `label` column is required when `require_label`.
pub fn read_table(path: &Path, require_label: bool) -> Result<Table, CsvError> {
    let file = File::open(path).map_err(|source| CsvError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.iter().all(|h| h.is_empty()) {
        return Err(format_err(path, "empty file (no header)"));
    }
    let label_idx = header.iter().position(|h| h == LABEL_COLUMN);
    if require_label && label_idx.is_none() {
        return Err(format_err(path, "missing 'label' column"));
    }
    let feature_idx: Vec<usize> = (0..header.len()).filter(|&i| Some(i) != label_idx).collect();
    if feature_idx.is_empty() {
        return Err(format_err(path, "no feature columns"));
    }

    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(format_err(
                path,
                format!("line {line}: expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        let cell_err = |col: usize, message: String| CsvError::Cell {
            path: path.display().to_string(),
            line,
            column: header[col].clone(),
            message,
        };
        for &j in &feature_idx {
            let raw = record[j].trim();
            let v: f64 = raw.parse().map_err(|_| cell_err(j, format!("not a number: '{raw}'")))?;
            if !v.is_finite() {
                return Err(cell_err(j, format!("non-finite value '{raw}'")));
            }
            data.push(v);
        }
        if let Some(j) = label_idx {
            match record[j].trim() {
                "0" => labels.push(0),
                "1" => labels.push(1),
                other => return Err(cell_err(j, format!("label must be 0 or 1, got '{other}'"))),
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(format_err(path, "no data rows"));
    }
    Ok(Table {
        feature_names: feature_idx.iter().map(|&j| header[j].clone()).collect(),
        features: Matrix::from_vec(rows, feature_idx.len(), data)?,
        labels: label_idx.map(|_| labels),
    })
}

/// Loads a labelled dataset named after the file stem.
pub fn load_csv(path: &Path) -> Result<Dataset, CsvError> {
    let t = read_table(path, true)?;
    let name = path.file_stem().map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned());
    Ok(Dataset::with_feature_names(
        name,
        t.features,
        t.labels.expect("label required"),
        t.feature_names,
    )?)
}

fn create(path: &Path) -> Result<csv::Writer<BufWriter<File>>, CsvError> {
    let file = File::create(path).map_err(|source| CsvError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn finish(path: &Path, w: csv::Writer<BufWriter<File>>) -> Result<(), CsvError> {
    let io = |source| CsvError::Io {
        path: path.display().to_string(),
        source,
    };
    w.into_inner()
        .map_err(|e| io(std::io::Error::other(e.to_string())))?
        .flush()
        .map_err(io)
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Writes features then `label`; values round-trip exactly.
pub fn save_csv(path: &Path, data: &Dataset) -> Result<(), CsvError> {
    let mut w = create(path)?;
    let mut header = data.feature_names.clone();
    header.push(LABEL_COLUMN.into());
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (row, label) in data.features.row_iter().zip(&data.labels) {
        let mut rec: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        rec.push(label.to_string());
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}

/// Writes the input table with one appended column per score.
pub fn save_scored(path: &Path, table: &Table, columns: &[(String, Vec<f64>)]) -> Result<(), CsvError> {
    let mut w = create(path)?;
    let mut header = table.feature_names.clone();
    if table.labels.is_some() {
        header.push(LABEL_COLUMN.into());
    }
    header.extend(columns.iter().map(|(n, _)| n.clone()));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (i, row) in table.features.row_iter().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        if let Some(l) = &table.labels {
            rec.push(l[i].to_string());
        }
        rec.extend(columns.iter().map(|(_, s)| fmt_f64(s[i])));
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}

/// Writes `x1,x2,score_<kind>...` rows.
pub fn save_grid(path: &Path, grid: &GridTable) -> Result<(), CsvError> {
    let mut header = vec!["x1".to_string(), "x2".to_string()];
    header.extend(grid.kinds.iter().map(|k| k.column()));
    save_rows(path, &header, grid.rows.iter().map(|r| r.iter().map(|&v| fmt_f64(v)).collect()))
}

/// Generic string-table writer.
pub fn save_rows<I>(path: &Path, header: &[String], rows: I) -> Result<(), CsvError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = create(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}
