//! On-disk report format: one JSON document per run plus one CSV per series.
//!
//! Everything except `timestamp` is a function of the resolved config and the
//! binary version, so two runs can be compared with a plain diff after
//! dropping that one field.

use std::io::Write;
use std::path::{Path, PathBuf};

use bsdelab_core::harness::{ExperimentReport, Metric, RuleVerdict, Series};
use serde::Serialize;

use crate::config::ExperimentConfig;

/// Overall outcome of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Outcome {
    Pass,
    Fail,
    /// A hypothesis check failed before the experiment could run.
    HypothesisViolation,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        match self {
            Outcome::Pass => 0,
            Outcome::HypothesisViolation => 2,
            Outcome::Fail => 3,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub tag: String,
    pub config_hash: String,
    pub version: String,
    pub timestamp: String,
    pub config: ExperimentConfig,
    pub verdict: Outcome,
    pub error: Option<String>,
    pub inputs_digest: String,
    pub inputs: Vec<String>,
    pub metrics: Vec<Metric>,
    pub verdicts: Vec<RuleVerdict>,
    /// CSV files next to the JSON report, by file name.
    pub artifacts: Vec<String>,
    pub consumed: Vec<String>,
    pub notes: Vec<String>,
}

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn now_rfc3339() -> String {
    time::OffsetDateTime::now_utc()
        .format(&time::format_description::well_known::Rfc3339)
        .unwrap_or_else(|_| "unknown".into())
}

impl RunReport {
    pub fn from_experiment(config: ExperimentConfig, hash: String, exp: &ExperimentReport) -> Self {
        let verdict = if exp.passed() { Outcome::Pass } else { Outcome::Fail };
        Self {
            tag: config.experiment.tag().to_string(),
            config_hash: hash,
            version: VERSION.to_string(),
            timestamp: now_rfc3339(),
            config,
            verdict,
            error: None,
            inputs_digest: exp.inputs_digest.clone(),
            inputs: exp.inputs.clone(),
            metrics: exp.metrics.clone(),
            verdicts: exp.verdicts.clone(),
            artifacts: exp.series.iter().map(|s| csv_name(&exp.tag, &s.name)).collect(),
            consumed: exp.consumed.clone(),
            notes: exp.notes.clone(),
        }
    }

    pub fn aborted(config: ExperimentConfig, hash: String, error: String) -> Self {
        Self {
            tag: config.experiment.tag().to_string(),
            config_hash: hash,
            version: VERSION.to_string(),
            timestamp: now_rfc3339(),
            config,
            verdict: Outcome::HypothesisViolation,
            error: Some(error),
            inputs_digest: String::new(),
            inputs: Vec::new(),
            metrics: Vec::new(),
            verdicts: Vec::new(),
            artifacts: Vec::new(),
            consumed: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }
}

/// File name for a series: `<tag>.<series>.csv` with unsafe characters replaced.
pub fn csv_name(tag: &str, series: &str) -> String {
    let clean: String = series
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{tag}.{clean}.csv")
}

pub fn write_series(path: &Path, series: &Series) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&series.columns)?;
    for row in &series.rows {
        w.write_record(row.iter().map(|v| format!("{v:e}")))?;
    }
    w.flush()
}

/// Write the JSON report and every CSV; returns the report path.
pub fn write_all(dir: &Path, report: &RunReport, exp: Option<&ExperimentReport>) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    if let Some(exp) = exp {
        for (s, name) in exp.series.iter().zip(&report.artifacts) {
            write_series(&dir.join(name), s)?;
        }
    }
    let path = dir.join(format!("{}.json", report.tag));
    let mut f = std::fs::File::create(&path)?;
    f.write_all(report.to_json().as_bytes())?;
    f.write_all(b"\n")?;
    Ok(path)
}

/// Report JSON with the timestamp blanked, for byte comparisons.
pub fn without_timestamp(json: &str) -> String {
    match serde_json::from_str::<serde_json::Value>(json) {
        Ok(mut v) => {
            if let Some(obj) = v.as_object_mut() {
                obj.remove("timestamp");
            }
            serde_json::to_string(&v).expect("values always serialize")
        }
        Err(_) => json.to_string(),
    }
}
