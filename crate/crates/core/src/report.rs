//! `metrics.json` and the plot-ready CSV tables.
//!
//! CSV schemas:
//!
//! - `boxplot.csv`: model, game, language, personalities, opponent_known,
//!   rounds_known, agent, n, min, q1, median, q3, max, mean. One row per
//!   configuration and agent; values are total game payoffs across
//!   repetitions.
//! - `rounds.csv`: model, game, round, mean, ci_low, ci_high, n. Normalized
//!   per-round outcomes of repeated games with a 2.5-97.5 percentile band.
//! - `radar.csv`: game, model, metric, raw, normalized, status.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::GameSpec;
use crate::metrics::{
    cross_language_inconsistency_raw, internal_variability_per_scenario, internal_variability_raw, mean,
    normalize_across_models, per_round_series, percentile, variability_over_rounds_raw, MetricError, ResultTensor,
    Selector,
};
use crate::results::{write_json_pretty, LoadedResults, ResultsError, RunStatus, METRICS_FILE};

pub const BOXPLOT_FILE: &str = "boxplot.csv";
pub const ROUNDS_FILE: &str = "rounds.csv";
pub const RADAR_FILE: &str = "radar.csv";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Results(#[from] ResultsError),
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("invalid stored config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetricName {
    #[serde(rename = "IV")]
    InternalVariability,
    #[serde(rename = "CI")]
    CrossLanguageInconsistency,
    #[serde(rename = "VR")]
    VariabilityOverRounds,
}

impl MetricName {
    pub const ALL: [MetricName; 3] = [
        MetricName::InternalVariability,
        MetricName::CrossLanguageInconsistency,
        MetricName::VariabilityOverRounds,
    ];

    pub fn code(self) -> &'static str {
        match self {
            MetricName::InternalVariability => "IV",
            MetricName::CrossLanguageInconsistency => "CI",
            MetricName::VariabilityOverRounds => "VR",
        }
    }
}

/// One metric across models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MetricScores {
    pub raw: BTreeMap<String, f64>,
    pub normalized: BTreeMap<String, f64>,
    /// Normalization factor: the largest raw score.
    pub z: Option<f64>,
    pub errors: BTreeMap<String, MetricError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameMetrics {
    pub game: String,
    pub selector: Selector,
    pub metrics: BTreeMap<MetricName, MetricScores>,
    /// Per-scenario internal variability; not the default IV.
    pub iv_per_scenario: BTreeMap<String, f64>,
    pub cells: BTreeMap<String, usize>,
    pub excluded_runs: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub experiment_id: String,
    pub config_hash: String,
    /// Variance flavor used by every metric.
    pub variance: String,
    pub games: Vec<GameMetrics>,
}

fn models(loaded: &LoadedResults) -> Vec<String> {
    loaded.manifest.config.models.iter().map(|m| m.id.clone()).collect()
}

fn specs(loaded: &LoadedResults) -> Result<Vec<GameSpec>, ReportError> {
    loaded.manifest.config.game_specs().map_err(|e| ReportError::Config(e.to_string()))
}

pub fn tensors(loaded: &LoadedResults, game: &GameSpec) -> Result<Vec<ResultTensor>, ReportError> {
    let mode = loaded.manifest.config.normalization;
    models(loaded)
        .iter()
        .map(|m| ResultTensor::from_runs(m, game, &loaded.runs, mode).map_err(|e| ReportError::Config(e.to_string())))
        .collect()
}

pub fn analyze(loaded: &LoadedResults) -> Result<MetricsReport, ReportError> {
    let mut games = Vec::new();
    for spec in specs(loaded)? {
        let tensors = tensors(loaded, &spec)?;
        let mut metrics = BTreeMap::new();
        for name in MetricName::ALL {
            let mut s = MetricScores::default();
            for t in &tensors {
                let r = match name {
                    MetricName::InternalVariability => internal_variability_raw(t),
                    MetricName::CrossLanguageInconsistency => cross_language_inconsistency_raw(t),
                    MetricName::VariabilityOverRounds => variability_over_rounds_raw(t),
                };
                match r {
                    Ok(v) => {
                        s.raw.insert(t.model_id.clone(), v);
                    }
                    Err(e) => {
                        s.errors.insert(t.model_id.clone(), e);
                    }
                }
            }
            if !s.raw.is_empty() {
                s.z = Some(s.raw.values().copied().fold(0.0, f64::max));
                s.normalized = normalize_across_models(&s.raw);
            }
            metrics.insert(name, s);
        }
        games.push(GameMetrics {
            game: spec.id.clone(),
            selector: Selector::default_for(&spec),
            metrics,
            iv_per_scenario: tensors
                .iter()
                .filter_map(|t| internal_variability_per_scenario(t).ok().map(|v| (t.model_id.clone(), v)))
                .collect(),
            cells: tensors.iter().map(|t| (t.model_id.clone(), t.cells.len())).collect(),
            excluded_runs: tensors.iter().map(|t| (t.model_id.clone(), t.excluded_runs)).collect(),
        });
    }
    Ok(MetricsReport {
        experiment_id: loaded.manifest.experiment_id.clone(),
        config_hash: loaded.manifest.config_hash.clone(),
        variance: "population".into(),
        games,
    })
}

pub fn write_metrics(report: &MetricsReport, dir: &Path) -> Result<PathBuf, ReportError> {
    let path = dir.join(METRICS_FILE);
    write_json_pretty(&path, report)?;
    Ok(path)
}

fn opt(b: Option<bool>) -> &'static str {
    match b {
        Some(true) => "true",
        Some(false) => "false",
        None => "n/a",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotRow {
    pub model: String,
    pub game: String,
    pub language: String,
    pub personalities: String,
    pub opponent_known: String,
    pub rounds_known: String,
    pub agent: String,
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRow {
    pub model: String,
    pub game: String,
    pub round: u32,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarRow {
    pub game: String,
    pub model: String,
    pub metric: String,
    pub raw: Option<f64>,
    pub normalized: Option<f64>,
    pub status: String,
}

pub fn boxplot_rows(loaded: &LoadedResults) -> Vec<BoxplotRow> {
    type Key = (String, String, String, String, &'static str, &'static str);
    let mut groups: BTreeMap<Key, [Vec<f64>; 2]> = BTreeMap::new();
    for run in loaded.runs.iter().filter(|r| r.status == RunStatus::Complete) {
        let key = (
            run.model.clone(),
            run.game.clone(),
            run.language.clone(),
            format!("{}/{}", run.personalities[0], run.personalities[1]),
            opt(run.opponent_personality_known),
            opt(run.rounds_known),
        );
        let g = groups.entry(key).or_default();
        g[0].push(run.totals[0]);
        g[1].push(run.totals[1]);
    }
    let mut rows = Vec::new();
    for ((model, game, language, personalities, ok, rk), per_agent) in groups {
        for (i, mut xs) in per_agent.into_iter().enumerate() {
            xs.sort_by(f64::total_cmp);
            rows.push(BoxplotRow {
                model: model.clone(),
                game: game.clone(),
                language: language.clone(),
                personalities: personalities.clone(),
                opponent_known: ok.into(),
                rounds_known: rk.into(),
                agent: format!("agent{}", i + 1),
                n: xs.len(),
                min: xs[0],
                q1: percentile(&xs, 0.25),
                median: percentile(&xs, 0.5),
                q3: percentile(&xs, 0.75),
                max: xs[xs.len() - 1],
                mean: mean(&xs),
            });
        }
    }
    rows
}

pub fn round_rows(loaded: &LoadedResults) -> Result<Vec<RoundRow>, ReportError> {
    let mut rows = Vec::new();
    for spec in specs(loaded)?.into_iter().filter(|g| g.is_repeated()) {
        for t in tensors(loaded, &spec)? {
            let Ok(series) = per_round_series(&t, t.selector) else { continue };
            rows.extend(series.into_iter().map(|p| RoundRow {
                model: t.model_id.clone(),
                game: spec.id.clone(),
                round: p.round,
                mean: p.mean,
                ci_low: p.ci_low,
                ci_high: p.ci_high,
                n: p.n,
            }));
        }
    }
    Ok(rows)
}

pub fn radar_rows(report: &MetricsReport) -> Vec<RadarRow> {
    let mut rows = Vec::new();
    for g in &report.games {
        let models: std::collections::BTreeSet<&String> = g.cells.keys().collect();
        for model in models {
            for name in MetricName::ALL {
                let s = &g.metrics[&name];
                let (raw, normalized, status) = match (s.raw.get(model), s.errors.get(model)) {
                    (Some(r), _) => (Some(*r), s.normalized.get(model).copied(), "ok".to_string()),
                    (None, Some(e)) => (None, None, e.to_string()),
                    (None, None) => (None, None, "missing".to_string()),
                };
                rows.push(RadarRow {
                    game: g.game.clone(),
                    model: model.clone(),
                    metric: name.code().into(),
                    raw,
                    normalized,
                    status,
                });
            }
        }
    }
    rows
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<(), ReportError> {
    let err = |source| ReportError::Csv { path: path.to_path_buf(), source };
    let mut w = csv::WriterBuilder::new().has_headers(!rows.is_empty()).from_path(path).map_err(err)?;
    if rows.is_empty() {
        w.write_record(header).map_err(err)?;
    }
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.flush().map_err(|e| ReportError::Csv { path: path.to_path_buf(), source: e.into() })
}

pub const BOXPLOT_HEADER: &[&str] = &[
    "model",
    "game",
    "language",
    "personalities",
    "opponent_known",
    "rounds_known",
    "agent",
    "n",
    "min",
    "q1",
    "median",
    "q3",
    "max",
    "mean",
];
pub const ROUNDS_HEADER: &[&str] = &["model", "game", "round", "mean", "ci_low", "ci_high", "n"];
pub const RADAR_HEADER: &[&str] = &["game", "model", "metric", "raw", "normalized", "status"];

/// Writes the three CSV tables into `out_dir`.
pub fn write_report(loaded: &LoadedResults, out_dir: &Path) -> Result<[PathBuf; 3], ReportError> {
    std::fs::create_dir_all(out_dir).map_err(|e| ResultsError::io(out_dir, e))?;
    let report = analyze(loaded)?;
    let paths = [out_dir.join(BOXPLOT_FILE), out_dir.join(ROUNDS_FILE), out_dir.join(RADAR_FILE)];
    write_csv(&paths[0], &boxplot_rows(loaded), BOXPLOT_HEADER)?;
    write_csv(&paths[1], &round_rows(loaded)?, ROUNDS_HEADER)?;
    write_csv(&paths[2], &radar_rows(&report), RADAR_HEADER)?;
    Ok(paths)
}
