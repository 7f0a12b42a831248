//! Stability metrics over a model's result tensor.
//!
//! Axes: language `a`, personality combination `b` (which also carries the
//! opponent-personality flag), rounds knowledge `c`, round `d`, repetition
//! `r`. All variances are population variances.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{GameSpec, NormalizationMode, OutcomeRange};
use crate::results::{RunRecord, RunStatus};

#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "error", content = "detail")]
pub enum MetricError {
    #[error("insufficient data: {0} value(s)")]
    InsufficientData(usize),
    #[error("insufficient languages: {0}")]
    InsufficientLanguages(usize),
    #[error("not applicable: {0}")]
    NotApplicable(String),
}

/// Which agent's outcome a metric reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    Agent1,
    Agent2,
    #[default]
    Mean,
}

impl Selector {
    pub fn as_str(self) -> &'static str {
        match self {
            Selector::Agent1 => "agent1",
            Selector::Agent2 => "agent2",
            Selector::Mean => "mean",
        }
    }

    /// Mean of both agents for prisoner's dilemma games, agent 1 otherwise
    /// (in a zero-sum game agent 2 mirrors agent 1).
    pub fn default_for(game: &GameSpec) -> Self {
        if game.matrix.is_zero_sum(1e-9) {
            Selector::Agent1
        } else {
            Selector::Mean
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub a: String,
    pub b: String,
    pub c: String,
    pub d: u32,
    pub r: u32,
}

/// Normalized outcomes of one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellValue {
    pub agents: [f64; 2],
    pub mean: f64,
}

impl CellValue {
    pub fn uniform(v: f64) -> Self {
        Self { agents: [v, v], mean: v }
    }

    pub fn get(&self, s: Selector) -> f64 {
        match s {
            Selector::Agent1 => self.agents[0],
            Selector::Agent2 => self.agents[1],
            Selector::Mean => self.mean,
        }
    }
}

/// Outcomes of one model on one game.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTensor {
    pub model_id: String,
    pub game_id: String,
    pub n_rounds: u32,
    pub selector: Selector,
    pub cells: BTreeMap<CellKey, CellValue>,
    /// Runs left out because they did not complete.
    pub excluded_runs: usize,
}

/// Label of the personality-combination axis.
pub fn combo_label(personalities: &[String; 2], opponent_known: Option<bool>) -> String {
    let base = format!("{}/{}", personalities[0], personalities[1]);
    match opponent_known {
        Some(true) => format!("{base} (opponent known)"),
        Some(false) => format!("{base} (opponent unknown)"),
        None => base,
    }
}

pub fn rounds_label(rounds_known: Option<bool>) -> String {
    match rounds_known {
        Some(true) => "rounds known".into(),
        Some(false) => "rounds unknown".into(),
        None => "n/a".into(),
    }
}

impl ResultTensor {
    pub fn new(model_id: &str, game_id: &str, n_rounds: u32) -> Self {
        Self { model_id: model_id.into(), game_id: game_id.into(), n_rounds, ..Default::default() }
    }

    pub fn insert(&mut self, a: &str, b: &str, c: &str, d: u32, r: u32, v: CellValue) {
        self.cells.insert(CellKey { a: a.into(), b: b.into(), c: c.into(), d, r }, v);
    }

    pub fn with_selector(mut self, s: Selector) -> Self {
        self.selector = s;
        self
    }

    /// Builds the tensor of `model` on `game` from run records; only
    /// complete runs contribute.
    pub fn from_runs<'a>(
        model: &str,
        game: &GameSpec,
        runs: impl IntoIterator<Item = &'a RunRecord>,
        mode: NormalizationMode,
    ) -> Result<Self, crate::game::GameError> {
        let per_agent = OutcomeRange::for_game(game, NormalizationMode::PerAgent)?;
        let joint = match mode {
            NormalizationMode::Joint => Some(OutcomeRange::for_game(game, NormalizationMode::Joint)?),
            NormalizationMode::PerAgent => None,
        };
        let mut t = ResultTensor::new(model, &game.id, game.n_rounds).with_selector(Selector::default_for(game));
        for run in runs.into_iter().filter(|r| r.model == model && r.game == game.id) {
            if run.status != RunStatus::Complete {
                t.excluded_runs += 1;
                continue;
            }
            let b = combo_label(&run.personalities, run.opponent_personality_known);
            let c = rounds_label(run.rounds_known);
            for round in &run.rounds {
                let agents = [per_agent.normalize(round.payoff_p1), per_agent.normalize(round.payoff_p2)];
                let mean = match joint {
                    Some(j) => j.normalize((round.payoff_p1 + round.payoff_p2) / 2.0),
                    None => (agents[0] + agents[1]) / 2.0,
                };
                t.insert(&run.language, &b, &c, round.round_index, run.repetition, CellValue { agents, mean });
            }
        }
        Ok(t)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.cells.values().map(|v| v.get(self.selector))
    }

    pub fn languages(&self) -> BTreeSet<&str> {
        self.cells.keys().map(|k| k.a.as_str()).collect()
    }

    /// Repetition-averaged value per (a, b, c, d).
    fn rep_means(&self) -> BTreeMap<(&str, &str, &str, u32), f64> {
        let mut acc: BTreeMap<(&str, &str, &str, u32), (f64, usize)> = BTreeMap::new();
        for (k, v) in &self.cells {
            let e = acc.entry((k.a.as_str(), k.b.as_str(), k.c.as_str(), k.d)).or_default();
            e.0 += v.get(self.selector);
            e.1 += 1;
        }
        acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance.
pub fn variance(xs: &[f64]) -> f64 {
    // a rounded mean would leave a tiny residue on constant data
    if xs.windows(2).all(|w| w[0] == w[1]) {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// Variance over the whole result set.
pub fn internal_variability_raw(t: &ResultTensor) -> Result<f64, MetricError> {
    let v: Vec<f64> = t.values().collect();
    if v.len() < 2 {
        return Err(MetricError::InsufficientData(v.len()));
    }
    Ok(variance(&v))
}

/// Non-default variant: variance across repetitions of each
/// (a, b, c, d) cell, averaged over cells with at least two repetitions.
pub fn internal_variability_per_scenario(t: &ResultTensor) -> Result<f64, MetricError> {
    let mut groups: BTreeMap<(&str, &str, &str, u32), Vec<f64>> = BTreeMap::new();
    for (k, v) in &t.cells {
        groups.entry((&k.a, &k.b, &k.c, k.d)).or_default().push(v.get(t.selector));
    }
    let vars: Vec<f64> = groups.values().filter(|g| g.len() >= 2).map(|g| variance(g)).collect();
    if vars.is_empty() {
        return Err(MetricError::InsufficientData(t.cells.len()));
    }
    Ok(mean(&vars))
}

/// Mean over (b, c) of the variance across languages of the round-mean.
pub fn cross_language_inconsistency_raw(t: &ResultTensor) -> Result<f64, MetricError> {
    let langs = t.languages().len();
    if langs < 2 {
        return Err(MetricError::InsufficientLanguages(langs));
    }
    let mut per_abc: BTreeMap<(&str, &str, &str), Vec<f64>> = BTreeMap::new();
    for ((a, b, c, _), v) in t.rep_means() {
        per_abc.entry((b, c, a)).or_default().push(v);
    }
    let mut per_bc: BTreeMap<(&str, &str), Vec<f64>> = BTreeMap::new();
    for ((b, c, _), series) in per_abc {
        per_bc.entry((b, c)).or_default().push(mean(&series));
    }
    let vars: Vec<f64> = per_bc.values().filter(|xs| xs.len() >= 2).map(|xs| variance(xs)).collect();
    if vars.is_empty() {
        return Err(MetricError::InsufficientLanguages(1));
    }
    Ok(mean(&vars))
}

/// Mean over variants (a, b, c) of the variance over rounds of the
/// repetition-averaged series.
pub fn variability_over_rounds_raw(t: &ResultTensor) -> Result<f64, MetricError> {
    if t.n_rounds < 2 {
        return Err(MetricError::NotApplicable(format!("game {} has a single round", t.game_id)));
    }
    let mut series: BTreeMap<(&str, &str, &str), Vec<f64>> = BTreeMap::new();
    for ((a, b, c, _), v) in t.rep_means() {
        series.entry((a, b, c)).or_default().push(v);
    }
    if series.is_empty() {
        return Err(MetricError::InsufficientData(0));
    }
    Ok(mean(&series.values().map(|s| variance(s)).collect::<Vec<_>>()))
}

/// Divides by the maximum; all zeros when the maximum is zero.
pub fn normalize_across_models(raw: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    let z = raw.values().copied().fold(0.0, f64::max);
    raw.iter().map(|(k, v)| (k.clone(), if z > 0.0 { v / z } else { 0.0 })).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundPoint {
    pub round: u32,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

/// Linear-interpolated percentile of sorted data, `q` in [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub const DEFAULT_INTERVAL: (f64, f64) = (0.025, 0.975);

/// Per-round mean over variants and repetitions with a percentile band.
pub fn per_round_series(t: &ResultTensor, selector: Selector) -> Result<Vec<RoundPoint>, MetricError> {
    per_round_series_with(t, selector, DEFAULT_INTERVAL)
}

pub fn per_round_series_with(
    t: &ResultTensor,
    selector: Selector,
    interval: (f64, f64),
) -> Result<Vec<RoundPoint>, MetricError> {
    if t.n_rounds < 2 {
        return Err(MetricError::NotApplicable(format!("game {} has a single round", t.game_id)));
    }
    let mut by_round: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for (k, v) in &t.cells {
        by_round.entry(k.d).or_default().push(v.get(selector));
    }
    Ok(by_round
        .into_iter()
        .map(|(round, mut xs)| {
            xs.sort_by(f64::total_cmp);
            RoundPoint {
                round,
                mean: mean(&xs),
                ci_low: percentile(&xs, interval.0),
                ci_high: percentile(&xs, interval.1),
                n: xs.len(),
            }
        })
        .collect())
}
