//! On-disk records: `results.jsonl` (one line per decision and one per
//! run), `requests.jsonl` (verbatim provider exchanges) and
//! `manifest.json`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ExperimentConfig;
use crate::game::{RoundRecord, StrategyId};
use crate::gateway::{Attempt, ChatRequestBody};

pub const RESULTS_FILE: &str = "results.jsonl";
pub const REQUESTS_FILE: &str = "requests.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.json";

#[derive(Debug, Error)]
pub enum ResultsError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {source}")]
    Parse { path: PathBuf, line: usize, source: serde_json::Error },
    #[error("no results in {0}")]
    Empty(PathBuf),
}

impl ResultsError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        ResultsError::Io { path: path.to_path_buf(), source }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    InvalidDecision,
    ProviderError,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Complete => "complete",
            RunStatus::InvalidDecision => "invalid_decision",
            RunStatus::ProviderError => "provider_error",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionStatus {
    /// Counted in the transcript.
    Applied,
    /// No valid choice could be obtained.
    Invalid,
    /// Valid, but the round was abandoned because the other agent failed.
    Discarded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub instance_id: String,
    pub round: u32,
    pub agent: u8,
    pub status: DecisionStatus,
    pub chosen: Option<StrategyId>,
    pub label: Option<String>,
    pub raw_reply: Option<String>,
    pub attempts: u32,
    pub provider_id: String,
    pub latency_ms: u64,
    /// Hex SHA-256 of the rendered prompt; absent for scripted agents.
    pub prompt_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub instance_id: String,
    pub model: String,
    pub game: String,
    pub language: String,
    pub personalities: [String; 2],
    pub rounds_known: Option<bool>,
    pub opponent_personality_known: Option<bool>,
    pub repetition: u32,
    pub seed: u64,
    pub status: RunStatus,
    pub rounds: Vec<RoundRecord>,
    pub totals: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// A line of `results.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ResultLine {
    Decision(DecisionRecord),
    Run(RunRecord),
}

/// A line of `requests.jsonl`. API keys never appear here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestLogEntry {
    pub instance_id: String,
    pub round: u32,
    pub agent: u8,
    pub provider_id: String,
    pub request: ChatRequestBody,
    pub attempt: Attempt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifestStatus {
    Running,
    Complete,
    Partial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub experiment_id: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub mock: bool,
    pub status: ManifestStatus,
    pub instances_total: usize,
    /// Distinct game configurations per model (languages and repetitions
    /// excluded).
    pub games_per_model: usize,
    pub counts: BTreeMap<RunStatus, usize>,
    pub rounds_completed: u64,
    pub decisions_applied: u64,
    pub decisions_invalid: u64,
    pub retried_instances: usize,
    pub started_unix_ms: u64,
    pub finished_unix_ms: Option<u64>,
    pub elapsed_ms: Option<u64>,
    pub config: ExperimentConfig,
}

impl ExperimentManifest {
    pub fn load(dir: &Path) -> Result<Self, ResultsError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| ResultsError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|source| ResultsError::Parse { path, line: 1, source })
    }

    pub fn save(&self, dir: &Path) -> Result<(), ResultsError> {
        write_json_pretty(&dir.join(MANIFEST_FILE), self)
    }

    pub fn failed(&self) -> usize {
        self.counts.iter().filter(|(s, _)| **s != RunStatus::Complete).map(|(_, n)| n).sum()
    }
}

pub fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<(), ResultsError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| ResultsError::io(path, e))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<(), ResultsError> {
    let file = File::create(path).map_err(|e| ResultsError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for it in items {
        serde_json::to_writer(&mut w, &it).expect("serializable");
        w.write_all(b"\n").map_err(|e| ResultsError::io(path, e))?;
    }
    w.flush().map_err(|e| ResultsError::io(path, e))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, ResultsError> {
    let file = File::open(path).map_err(|e| ResultsError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| ResultsError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| ResultsError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?);
    }
    Ok(out)
}

/// Everything an analysis needs from a results directory.
#[derive(Debug, Clone)]
pub struct LoadedResults {
    pub manifest: ExperimentManifest,
    pub runs: Vec<RunRecord>,
    pub decisions: Vec<DecisionRecord>,
}

impl LoadedResults {
    pub fn load(dir: &Path) -> Result<Self, ResultsError> {
        let manifest = ExperimentManifest::load(dir)?;
        let mut runs = Vec::new();
        let mut decisions = Vec::new();
        for line in read_jsonl::<ResultLine>(&dir.join(RESULTS_FILE))? {
            match line {
                ResultLine::Run(r) => runs.push(r),
                ResultLine::Decision(d) => decisions.push(d),
            }
        }
        if runs.is_empty() {
            return Err(ResultsError::Empty(dir.to_path_buf()));
        }
        Ok(Self { manifest, runs, decisions })
    }
}
