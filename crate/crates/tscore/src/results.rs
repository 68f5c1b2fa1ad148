//! Experiment results as JSON lines with crash-safe resume.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use tscore_core::score::ScoreKind;
use tscore_core::EvalRecord;

pub fn to_line(r: &EvalRecord) -> String {
    let mut s = serde_json::to_string(r).expect("record serializes");
    s.push('\n');
    s
}

/// Reads every record; fails on any malformed line.
pub fn read_records(path: &Path) -> anyhow::Result<Vec<EvalRecord>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}: line {}", path.display(), i + 1)))
        .collect()
}

/// Appends records and flushes after every batch.
#[derive(Debug)]
pub struct ResultsWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl ResultsWriter {
    pub fn create(path: &Path) -> anyhow::Result<Self> {
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(f),
        })
    }

    /// Opens an existing results file for resuming. Complete work units
    /// (a `(split, config)` pair with a record for every kind in `kinds`) are
    /// kept and returned; a torn last line and incomplete units are dropped
    /// from the file.
    pub fn resume(path: &Path, kinds: &[ScoreKind]) -> anyhow::Result<(Self, Vec<EvalRecord>)> {
        if !path.exists() {
            return Ok((Self::create(path)?, Vec::new()));
        }
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let complete_text = match text.rfind('\n') {
            Some(i) => &text[..=i],
            None => "",
        };
        let mut records = Vec::new();
        for (i, line) in complete_text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r: EvalRecord =
                serde_json::from_str(line).with_context(|| format!("{}: corrupt line {}", path.display(), i + 1))?;
            records.push(r);
        }
        let wanted: BTreeSet<ScoreKind> = kinds.iter().copied().collect();
        let mut per_unit: BTreeMap<(usize, usize), BTreeSet<ScoreKind>> = BTreeMap::new();
        for r in &records {
            if !wanted.contains(&r.score_kind) {
                bail!(
                    "{}: contains score kind '{}' not requested; use a fresh output file",
                    path.display(),
                    r.score_kind.name()
                );
            }
            if !per_unit.entry((r.split, r.config_index)).or_default().insert(r.score_kind) {
                bail!("{}: duplicate record for split {} config {}", path.display(), r.split, r.config_index);
            }
        }
        let kept: Vec<EvalRecord> = records
            .into_iter()
            .filter(|r| per_unit[&(r.split, r.config_index)] == wanted)
            .collect();

        let mut body = String::new();
        kept.iter().for_each(|r| body.push_str(&to_line(r)));
        if body != text {
            let tmp = path.with_extension("jsonl.tmp");
            fs::write(&tmp, &body).with_context(|| format!("writing {}", tmp.display()))?;
            fs::rename(&tmp, path).with_context(|| format!("replacing {}", path.display()))?;
        }
        let f = OpenOptions::new()
            .append(true)
            .open(path)
            .with_context(|| format!("opening {}", path.display()))?;
        Ok((
            Self {
                path: path.to_path_buf(),
                out: BufWriter::new(f),
            },
            kept,
        ))
    }

    pub fn append(&mut self, records: &[EvalRecord]) -> anyhow::Result<()> {
        for r in records {
            self.out.write_all(to_line(r).as_bytes())?;
        }
        self.out.flush().with_context(|| format!("writing {}", self.path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tscore_core::harness::RECORD_VERSION;
    use tscore_core::TrainConfig;

    fn rec(split: usize, config_index: usize, kind: ScoreKind) -> EvalRecord {
        EvalRecord {
            v: RECORD_VERSION,
            dataset: "d".into(),
            split,
            split_seed: 1,
            config_index,
            config: TrainConfig::default(),
            score_kind: kind,
            train_auc: None,
            test_auc: Some(0.75),
            selection_metric: Some(-1.25),
            wall_time: 0.5,
            failed: false,
            error: None,
            model: None,
        }
    }

    #[test]
    fn json_round_trip() {
        let r = rec(0, 1, ScoreKind::ProposedEncoder);
        let line = to_line(&r);
        assert!(line.starts_with("{\"v\":1,"));
        assert!(line.contains("\"score_kind\":\"proposed_enc\""));
        let back: EvalRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn resume_drops_torn_and_incomplete_units() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.jsonl");
        let kinds = [ScoreKind::ReconstructionError, ScoreKind::ProposedDecoder];
        let mut text = String::new();
        text += &to_line(&rec(0, 0, kinds[0]));
        text += &to_line(&rec(0, 0, kinds[1]));
        text += &to_line(&rec(0, 1, kinds[0]));
        text += &to_line(&rec(0, 1, kinds[1]))[..20];
        fs::write(&p, &text).unwrap();

        let (mut w, kept) = ResultsWriter::resume(&p, &kinds).unwrap();
        assert_eq!(kept.len(), 2);
        assert_eq!(read_records(&p).unwrap(), kept);
        w.append(&[rec(0, 1, kinds[0]), rec(0, 1, kinds[1])]).unwrap();
        assert_eq!(read_records(&p).unwrap().len(), 4);
    }
}
