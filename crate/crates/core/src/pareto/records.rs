use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ParetoError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trial {
    pub correct: bool,
    pub output_tokens: u64,
}

/// Evaluation of one model on one benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRecord {
    pub model_id: String,
    pub method: String,
    pub strength: f64,
    pub benchmark: String,
    pub trials: Vec<Trial>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

impl EvalRecord {
    fn validate(&self) -> Result<(), String> {
        if self.trials.is_empty() {
            return Err("trials must not be empty".into());
        }
        if !(0.0..=1.0).contains(&self.strength) {
            return Err(format!("strength {} outside [0, 1]", self.strength));
        }
        if self.model_id.is_empty() || self.benchmark.is_empty() {
            return Err("model_id and benchmark must be non-empty".into());
        }
        Ok(())
    }

    /// Identity used for de-duplication: the model, the benchmark and a
    /// hash of the trial list.
    fn key(&self) -> (String, String, [u8; 32]) {
        let mut h = Sha256::new();
        for t in &self.trials {
            h.update([u8::from(t.correct)]);
            h.update(t.output_tokens.to_le_bytes());
        }
        (
            self.model_id.clone(),
            self.benchmark.clone(),
            h.finalize().into(),
        )
    }
}

/// Parses newline-delimited JSON records; blank lines are ignored and
/// repeated records are kept once. Line numbers in errors start at 1.
pub fn parse_records(text: &str) -> Result<Vec<EvalRecord>, ParetoError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let invalid = |reason: String| ParetoError::InvalidRecord {
            line: i + 1,
            reason,
        };
        let rec: EvalRecord = serde_json::from_str(line).map_err(|e| invalid(e.to_string()))?;
        rec.validate().map_err(invalid)?;
        if seen.insert(rec.key()) {
            out.push(rec);
        }
    }
    Ok(out)
}

pub fn ingest_records(path: impl AsRef<Path>) -> Result<Vec<EvalRecord>, ParetoError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ParetoError::io(path, e))?;
    let records = parse_records(&text)?;
    if records.is_empty() {
        return Err(ParetoError::Empty(path.to_path_buf()));
    }
    Ok(records)
}
