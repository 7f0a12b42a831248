//! Two-player, two-strategy matrix games: payoff lookup, transcripts of
//! played rounds, and outcome normalization.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("invalid game: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("transcript full: game allows {0} rounds")]
    TranscriptFull(u32),
    #[error("degenerate range: every attainable value equals {0}")]
    DegenerateRange(f64),
}

/// One of the two strategies of a game. `First` renders as `{strategy1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum StrategyId {
    First,
    Second,
}

impl StrategyId {
    pub const BOTH: [StrategyId; 2] = [StrategyId::First, StrategyId::Second];

    pub fn index(self) -> usize {
        match self {
            StrategyId::First => 0,
            StrategyId::Second => 1,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        match index {
            0 => Some(StrategyId::First),
            1 => Some(StrategyId::Second),
            _ => None,
        }
    }

    pub fn other(self) -> Self {
        match self {
            StrategyId::First => StrategyId::Second,
            StrategyId::Second => StrategyId::First,
        }
    }

    /// Row-major letter used in reports ("A" for the first strategy).
    pub fn letter(self) -> char {
        match self {
            StrategyId::First => 'A',
            StrategyId::Second => 'B',
        }
    }
}

impl From<StrategyId> for u8 {
    fn from(s: StrategyId) -> u8 {
        s.index() as u8
    }
}

impl TryFrom<u8> for StrategyId {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        StrategyId::from_index(v as usize).ok_or_else(|| format!("strategy index {v} out of range"))
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Whether players try to make their own payoff large or small.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Maximize,
    Minimize,
}

impl Objective {
    /// Maps a raw payoff onto a "bigger is better" utility.
    pub fn utility(self, payoff: f64) -> f64 {
        match self {
            Objective::Maximize => payoff,
            Objective::Minimize => -payoff,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Objective::Maximize => Objective::Minimize,
            Objective::Minimize => Objective::Maximize,
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Maximize => "maximize",
            Objective::Minimize => "minimize",
        })
    }
}

/// 2x2 bimatrix; `cells[row][col] = (payoff_p1, payoff_p2)` where the row is
/// player 1's strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayoffMatrix {
    pub cells: [[(f64, f64); 2]; 2],
}

impl PayoffMatrix {
    pub fn new(cells: [[(f64, f64); 2]; 2]) -> Self {
        Self { cells }
    }

    pub fn cell(&self, p1: StrategyId, p2: StrategyId) -> (f64, f64) {
        self.cells[p1.index()][p2.index()]
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|(_, _, (x, y))| x.is_finite() && y.is_finite())
    }

    pub fn is_zero_sum(&self, tol: f64) -> bool {
        self.iter().all(|(_, _, (x, y))| (x + y).abs() <= tol)
    }

    /// Row-major iteration over `(row, col, payoffs)`.
    pub fn iter(&self) -> impl Iterator<Item = (StrategyId, StrategyId, (f64, f64))> + '_ {
        StrategyId::BOTH
            .into_iter()
            .flat_map(move |r| StrategyId::BOTH.into_iter().map(move |c| (r, c, self.cell(r, c))))
    }

    /// Every payoff negated.
    pub fn negated(&self) -> Self {
        let mut cells = self.cells;
        for row in cells.iter_mut() {
            for cell in row.iter_mut() {
                *cell = (-cell.0, -cell.1);
            }
        }
        Self { cells }
    }

    /// The same game seen with the players' roles exchanged.
    pub fn swapped_players(&self) -> Self {
        let mut cells = [[(0.0, 0.0); 2]; 2];
        for (r, c, (x, y)) in self.iter() {
            cells[c.index()][r.index()] = (y, x);
        }
        Self { cells }
    }

    /// The zero-sum game from the paper's one-shot scenario.
    pub fn zero_sum_example() -> Self {
        Self::new([[(2.0, -2.0), (-2.0, 2.0)], [(-2.0, 2.0), (2.0, -2.0)]])
    }

    /// The prisoner's dilemma matrix used for the repeated game.
    pub fn prisoners_dilemma_example() -> Self {
        Self::new([[(6.0, 6.0), (0.0, 10.0)], [(10.0, 0.0), (2.0, 2.0)]])
    }
}

/// Returns the exact payoff pair for a strategy profile.
pub fn payoff_for(matrix: &PayoffMatrix, p1: StrategyId, p2: StrategyId) -> (f64, f64) {
    matrix.cell(p1, p2)
}

/// A validated game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSpec {
    pub id: String,
    /// Template family used to prompt this game (e.g. `zero_sum`).
    pub kind: String,
    pub strategies: [String; 2],
    pub matrix: PayoffMatrix,
    pub n_rounds: u32,
    pub objective: Objective,
    /// Values substituted verbatim into `{weight1}`..`{weightN}`.
    pub weights: Vec<f64>,
    /// Strategy treated as "cooperate" by reciprocal policies.
    pub cooperate: StrategyId,
}

impl GameSpec {
    pub fn new(
        id: impl Into<String>,
        kind: impl Into<String>,
        strategies: [&str; 2],
        matrix: PayoffMatrix,
        n_rounds: u32,
        objective: Objective,
    ) -> Result<Self, GameError> {
        let def = GameDef {
            id: id.into(),
            kind: kind.into(),
            strategies: strategies.iter().map(|s| s.to_string()).collect(),
            matrix: matrix
                .cells
                .iter()
                .map(|row| row.iter().map(|&(x, y)| Some([x, y])).collect())
                .collect(),
            n_rounds,
            objective,
            weights: Vec::new(),
            cooperate: 0,
            vary_rounds_known: None,
            vary_opponent_personality_known: None,
        };
        def.build()
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        self.weights = weights;
        self
    }

    pub fn is_repeated(&self) -> bool {
        self.n_rounds > 1
    }

    pub fn label(&self, s: StrategyId) -> &str {
        &self.strategies[s.index()]
    }

    /// The paper's one-shot zero-sum game.
    pub fn zero_sum_example() -> Self {
        GameSpec::new(
            "zero_sum",
            "zero_sum",
            ["Option A", "Option B"],
            PayoffMatrix::zero_sum_example(),
            1,
            Objective::Maximize,
        )
        .expect("valid")
        .with_weights(vec![2.0, -2.0])
    }

    /// The repeated prisoner's dilemma, read as rewards.
    pub fn prisoners_dilemma_example() -> Self {
        GameSpec::new(
            "prisoners_dilemma",
            "prisoners_dilemma",
            ["Option A", "Option B"],
            PayoffMatrix::prisoners_dilemma_example(),
            10,
            Objective::Maximize,
        )
        .expect("valid")
        .with_weights(vec![6.0, 0.0, 10.0, 2.0])
    }
}

/// Game as written in a configuration file. Unlike [`GameSpec`] it can hold
/// malformed data, which [`validate_game`] reports on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameDef {
    pub id: String,
    pub kind: String,
    pub strategies: Vec<String>,
    /// Rows of `[payoff_p1, payoff_p2]` cells; `null` marks a missing cell.
    pub matrix: Vec<Vec<Option<[f64; 2]>>>,
    pub n_rounds: u32,
    pub objective: Objective,
    #[serde(default)]
    pub weights: Vec<f64>,
    #[serde(default)]
    pub cooperate: usize,
    /// Whether the rounds-knowledge axis applies. Defaults to `n_rounds > 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vary_rounds_known: Option<bool>,
    /// Whether the opponent-personality axis applies. Defaults to true.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vary_opponent_personality_known: Option<bool>,
}

impl GameDef {
    pub fn varies_rounds_known(&self) -> bool {
        self.vary_rounds_known.unwrap_or(self.n_rounds > 1)
    }

    pub fn varies_opponent_personality_known(&self) -> bool {
        self.vary_opponent_personality_known.unwrap_or(true)
    }

    pub fn build(&self) -> Result<GameSpec, GameError> {
        let report = validate_game(self);
        if !report.is_valid() {
            return Err(GameError::Invalid(report.violations()));
        }
        let mut cells = [[(0.0, 0.0); 2]; 2];
        for (r, row) in self.matrix.iter().enumerate() {
            for (c, cell) in row.iter().enumerate() {
                let [x, y] = cell.expect("validated");
                cells[r][c] = (x, y);
            }
        }
        Ok(GameSpec {
            id: self.id.clone(),
            kind: self.kind.clone(),
            strategies: [self.strategies[0].clone(), self.strategies[1].clone()],
            matrix: PayoffMatrix::new(cells),
            n_rounds: self.n_rounds,
            objective: self.objective,
            weights: self.weights.clone(),
            cooperate: StrategyId::from_index(self.cooperate).expect("validated"),
        })
    }
}

impl From<&GameSpec> for GameDef {
    fn from(g: &GameSpec) -> Self {
        GameDef {
            id: g.id.clone(),
            kind: g.kind.clone(),
            strategies: g.strategies.to_vec(),
            matrix: g
                .matrix
                .cells
                .iter()
                .map(|row| row.iter().map(|&(x, y)| Some([x, y])).collect())
                .collect(),
            n_rounds: g.n_rounds,
            objective: g.objective,
            weights: g.weights.clone(),
            cooperate: g.cooperate.index(),
            vary_rounds_known: None,
            vary_opponent_personality_known: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub game_id: String,
    pub checks: Vec<Check>,
    pub zero_sum: bool,
    pub objective: Objective,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn violations(&self) -> Vec<String> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.detail.clone()).collect()
    }
}

/// Normalized form used to compare strategy labels.
pub fn normalize_label(label: &str) -> String {
    label.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

pub fn validate_game(def: &GameDef) -> ValidationReport {
    let mut checks = Vec::new();
    let mut push = |name, passed, detail: String| checks.push(Check { name, passed, detail });

    push("id", !def.id.trim().is_empty(), "game id must be non-empty".into());

    let count_ok = def.strategies.len() == 2;
    push(
        "strategy count",
        count_ok,
        if count_ok {
            "2 strategies".into()
        } else {
            format!("expected 2 strategies, found {}", def.strategies.len())
        },
    );
    if count_ok {
        let a = normalize_label(&def.strategies[0]);
        let b = normalize_label(&def.strategies[1]);
        let ok = !a.is_empty() && !b.is_empty() && a != b;
        push("strategy labels", ok, "strategy labels must be non-empty and distinct".into());
    }

    let mut missing = Vec::new();
    let mut non_finite = Vec::new();
    if def.matrix.len() > 2 || def.matrix.iter().any(|row| row.len() > 2) {
        push("matrix shape", false, "matrix larger than 2x2".into());
    }
    for r in StrategyId::BOTH {
        for c in StrategyId::BOTH {
            match def.matrix.get(r.index()).and_then(|row| row.get(c.index())).copied().flatten() {
                None => missing.push(format!("({r},{c})")),
                Some([x, y]) if !(x.is_finite() && y.is_finite()) => {
                    non_finite.push(format!("({r},{c})"))
                }
                Some(_) => {}
            }
        }
    }
    push(
        "cells present",
        missing.is_empty(),
        if missing.is_empty() {
            "all 4 cells present".into()
        } else {
            format!("missing cell {}", missing.join(", "))
        },
    );
    push(
        "finite payoffs",
        non_finite.is_empty(),
        if non_finite.is_empty() {
            "all payoffs finite".into()
        } else {
            format!("non-finite payoff in cell {}", non_finite.join(", "))
        },
    );
    push("rounds", def.n_rounds >= 1, format!("n_rounds must be >= 1, found {}", def.n_rounds));
    push(
        "cooperate",
        def.cooperate < 2,
        format!("cooperate must index a strategy (0 or 1), found {}", def.cooperate),
    );
    push(
        "weights finite",
        def.weights.iter().all(|w| w.is_finite()),
        "weights must be finite".into(),
    );

    let zero_sum = missing.is_empty()
        && non_finite.is_empty()
        && def.matrix.iter().flatten().flatten().all(|[x, y]| (x + y).abs() <= 1e-9);

    ValidationReport { game_id: def.id.clone(), checks, zero_sum, objective: def.objective }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round_index: u32,
    pub choice_p1: StrategyId,
    pub choice_p2: StrategyId,
    pub payoff_p1: f64,
    pub payoff_p2: f64,
}

impl RoundRecord {
    pub fn is_coherent(&self, matrix: &PayoffMatrix) -> bool {
        payoff_for(matrix, self.choice_p1, self.choice_p2) == (self.payoff_p1, self.payoff_p2)
    }
}

/// Rounds played so far in one game run. Appending returns a new transcript.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    game: Arc<GameSpec>,
    rounds: Vec<RoundRecord>,
    seed: u64,
}

impl Transcript {
    pub fn new(game: Arc<GameSpec>, seed: u64) -> Self {
        Self { game, rounds: Vec::new(), seed }
    }

    pub fn game(&self) -> &GameSpec {
        &self.game
    }

    pub fn rounds(&self) -> &[RoundRecord] {
        &self.rounds
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.rounds.len() as u32 >= self.game.n_rounds
    }

    pub fn apply_round(&self, p1: StrategyId, p2: StrategyId) -> Result<Transcript, GameError> {
        if self.is_complete() {
            return Err(GameError::TranscriptFull(self.game.n_rounds));
        }
        let (payoff_p1, payoff_p2) = payoff_for(&self.game.matrix, p1, p2);
        let mut next = self.clone();
        next.rounds.push(RoundRecord {
            round_index: self.rounds.len() as u32 + 1,
            choice_p1: p1,
            choice_p2: p2,
            payoff_p1,
            payoff_p2,
        });
        Ok(next)
    }

    /// Rebuilds a transcript from stored rounds, rechecking contiguity,
    /// capacity and payoff coherence.
    pub fn from_rounds(
        game: Arc<GameSpec>,
        seed: u64,
        rounds: Vec<RoundRecord>,
    ) -> Result<Transcript, GameError> {
        let mut problems = Vec::new();
        if rounds.len() as u32 > game.n_rounds {
            problems.push(format!("{} rounds exceed n_rounds {}", rounds.len(), game.n_rounds));
        }
        for (i, r) in rounds.iter().enumerate() {
            if r.round_index != i as u32 + 1 {
                problems.push(format!("round {} stored at position {}", r.round_index, i + 1));
            }
            if !r.is_coherent(&game.matrix) {
                problems.push(format!("round {} payoffs do not match the matrix", r.round_index));
            }
        }
        if problems.is_empty() {
            Ok(Transcript { game, rounds, seed })
        } else {
            Err(GameError::Invalid(problems))
        }
    }
}

pub fn total_payoffs(t: &Transcript) -> (f64, f64) {
    t.rounds().iter().fold((0.0, 0.0), |(a, b), r| (a + r.payoff_p1, b + r.payoff_p2))
}

/// Which per-round quantity the normalization extremes are taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMode {
    /// Extremes of any single agent's payoff in one round.
    #[default]
    PerAgent,
    /// Extremes of the two agents' mean payoff in one round.
    Joint,
}

/// Affine map from attainable per-round values onto [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutcomeRange {
    pub min: f64,
    pub max: f64,
}

impl OutcomeRange {
    pub fn for_game(spec: &GameSpec, mode: NormalizationMode) -> Result<Self, GameError> {
        let values: Vec<f64> = match mode {
            NormalizationMode::PerAgent => spec.matrix.iter().flat_map(|(_, _, (x, y))| [x, y]).collect(),
            NormalizationMode::Joint => spec.matrix.iter().map(|(_, _, (x, y))| (x + y) / 2.0).collect(),
        };
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max - min <= 0.0 {
            return Err(GameError::DegenerateRange(min));
        }
        Ok(Self { min, max })
    }

    pub fn normalize(&self, value: f64) -> f64 {
        2.0 * (value - self.min) / (self.max - self.min) - 1.0
    }
}

pub fn normalize_outcome(value: f64, spec: &GameSpec, mode: NormalizationMode) -> Result<f64, GameError> {
    Ok(OutcomeRange::for_game(spec, mode)?.normalize(value))
}
