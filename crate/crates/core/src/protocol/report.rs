use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::ConfusionMatrix;
use super::multi::SessionResult;
use super::single::SingleSessionOutcome;
use crate::datamodel::RunConfig;
use crate::{Error, Result};

pub const RESULTS_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "protocol", rename_all = "lowercase")]
pub enum ResultsBody {
    Multi { sessions: Vec<SessionResult> },
    Single(SingleSessionOutcome),
}

/// On-disk record of one run, including the fully resolved configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub schema: u32,
    pub label: String,
    pub config: RunConfig,
    #[serde(flatten)]
    pub body: ResultsBody,
}

impl ResultsFile {
    pub fn new(label: impl Into<String>, config: RunConfig, body: ResultsBody) -> Self {
        ResultsFile {
            schema: RESULTS_SCHEMA,
            label: label.into(),
            config,
            body,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<ResultsFile> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value
            .get("schema")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Format("results file has no schema version".into()))?;
        if found != u64::from(RESULTS_SCHEMA) {
            return Err(Error::SchemaVersion {
                found: found as u32,
                expected: RESULTS_SCHEMA,
            });
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn load(path: &Path) -> Result<ResultsFile> {
        let mut text = String::new();
        std::io::Read::read_to_string(&mut BufReader::new(File::open(path)?), &mut text)?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(self.to_json()?.as_bytes())?;
        w.flush()?;
        Ok(())
    }
}

/// Weighted accuracy per session, one row per labelled run, one column per
/// session. Shorter runs leave trailing cells empty.
pub fn session_table_csv<W: Write>(runs: &[(&str, &[SessionResult])], writer: W) -> Result<()> {
    let width = runs.iter().map(|(_, s)| s.len()).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["method".to_string()];
    header.extend((0..width).map(|t| t.to_string()));
    w.write_record(&header)?;
    for (label, sessions) in runs {
        let mut row = vec![label.to_string()];
        for t in 0..width {
            row.push(
                sessions
                    .iter()
                    .find(|s| s.session == t)
                    .map(|s| format!("{:.2}", s.acc_weighted))
                    .unwrap_or_default(),
            );
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn single_summary_csv<W: Write>(runs: &[(&str, &SingleSessionOutcome)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "method",
        "episodes",
        "failed",
        "accuracy",
        "ci95",
        "base_joint",
        "novel_joint",
        "base_individual",
        "novel_individual",
        "delta",
        "abs_delta",
    ])?;
    for (label, o) in runs {
        let s = &o.summary;
        let f = |v: f64| format!("{v:.2}");
        w.write_record([
            label.to_string(),
            s.episodes_completed.to_string(),
            s.episodes_failed.to_string(),
            f(s.mean_joint.mean),
            f(s.mean_joint.ci95),
            f(s.base_joint.mean),
            f(s.novel_joint.mean),
            f(s.base_individual.mean),
            f(s.novel_individual.mean),
            f(s.delta.mean),
            f(s.abs_delta),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Count grid: rows are gold classes, columns predicted classes.
pub fn confusion_csv<W: Write>(matrix: &ConfusionMatrix, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["gold\\pred".to_string()];
    header.extend(matrix.classes().iter().map(|c| c.to_string()));
    w.write_record(&header)?;
    for (c, row) in matrix.classes().iter().zip(matrix.counts()) {
        let mut rec = vec![c.to_string()];
        rec.extend(row.iter().map(|n| n.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
