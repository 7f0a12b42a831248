//! Exact analysis of 2x2 games: strict dominance, pure and mixed Nash
//! equilibria, zero-sum value and the prisoner's dilemma ordering.
//!
//! Every routine reads payoffs through the game's [`Objective`], so a
//! minimize game is solved as the maximize game over negated payoffs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{GameSpec, Objective, PayoffMatrix, StrategyId};

pub const DEFAULT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EquilibriumError {
    #[error("degenerate game: indifference condition has zero denominator")]
    Degenerate,
    #[error("strict dominance present: use dominant_strategies")]
    DominancePresent,
    #[error("not zero-sum")]
    NotZeroSum,
}

/// Probability each player assigns to its first strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixedProfile {
    pub p1_prob_strategy0: f64,
    pub p2_prob_strategy0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Profile {
    pub p1: StrategyId,
    pub p2: StrategyId,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumReport {
    pub game_id: String,
    pub objective: Objective,
    pub pure_equilibria: Vec<Profile>,
    pub mixed_equilibrium: Option<MixedProfile>,
    /// Why no mixed profile was reported, if none was.
    pub mixed_note: Option<String>,
    pub dominant_p1: Option<StrategyId>,
    pub dominant_p2: Option<StrategyId>,
    pub zero_sum_value: Option<f64>,
    pub pd_ordering_ok: bool,
}

/// Solver with a configurable absolute tolerance for payoff comparisons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Analyzer {
    pub tol: f64,
}

impl Default for Analyzer {
    fn default() -> Self {
        Self { tol: DEFAULT_TOLERANCE }
    }
}

/// Utilities with "bigger is better" semantics for both players.
#[derive(Debug, Clone, Copy)]
struct Utilities([[(f64, f64); 2]; 2]);

impl Utilities {
    fn of(matrix: &PayoffMatrix, objective: Objective) -> Self {
        let mut u = matrix.cells;
        for row in u.iter_mut() {
            for cell in row.iter_mut() {
                *cell = (objective.utility(cell.0), objective.utility(cell.1));
            }
        }
        Utilities(u)
    }

    fn p1(&self, r: StrategyId, c: StrategyId) -> f64 {
        self.0[r.index()][c.index()].0
    }

    fn p2(&self, r: StrategyId, c: StrategyId) -> f64 {
        self.0[r.index()][c.index()].1
    }
}

impl Analyzer {
    pub fn new(tol: f64) -> Self {
        Self { tol }
    }

    pub fn pure_nash(&self, spec: &GameSpec) -> Vec<Profile> {
        let u = Utilities::of(&spec.matrix, spec.objective);
        let mut out = Vec::new();
        for r in StrategyId::BOTH {
            for c in StrategyId::BOTH {
                let p1_ok = u.p1(r, c) >= u.p1(r.other(), c) - self.tol;
                let p2_ok = u.p2(r, c) >= u.p2(r, c.other()) - self.tol;
                if p1_ok && p2_ok {
                    out.push(Profile { p1: r, p2: c });
                }
            }
        }
        out
    }

    pub fn dominant_strategies(&self, spec: &GameSpec) -> (Option<StrategyId>, Option<StrategyId>) {
        let u = Utilities::of(&spec.matrix, spec.objective);
        let p1 = StrategyId::BOTH.into_iter().find(|&s| {
            StrategyId::BOTH.iter().all(|&c| u.p1(s, c) > u.p1(s.other(), c) + self.tol)
        });
        let p2 = StrategyId::BOTH.into_iter().find(|&s| {
            StrategyId::BOTH.iter().all(|&r| u.p2(r, s) > u.p2(r, s.other()) + self.tol)
        });
        (p1, p2)
    }

    pub fn mixed_nash_2x2(&self, spec: &GameSpec) -> Result<MixedProfile, EquilibriumError> {
        if self.dominant_strategies(spec) != (None, None) {
            return Err(EquilibriumError::DominancePresent);
        }
        use StrategyId::{First as A, Second as B};
        let u = Utilities::of(&spec.matrix, spec.objective);
        // Player 1 mixes to make player 2 indifferent between columns and
        // vice versa.
        let den_p1 = u.p2(A, A) - u.p2(A, B) - u.p2(B, A) + u.p2(B, B);
        let den_p2 = u.p1(A, A) - u.p1(B, A) - u.p1(A, B) + u.p1(B, B);
        if den_p1.abs() <= self.tol || den_p2.abs() <= self.tol {
            return Err(EquilibriumError::Degenerate);
        }
        let p = (u.p2(B, B) - u.p2(B, A)) / den_p1;
        let q = (u.p1(B, B) - u.p1(A, B)) / den_p2;
        Ok(MixedProfile { p1_prob_strategy0: p.clamp(0.0, 1.0), p2_prob_strategy0: q.clamp(0.0, 1.0) })
    }

    /// Value of a zero-sum game to player 1, in the game's payoff units.
    pub fn zero_sum_value(&self, spec: &GameSpec) -> Result<f64, EquilibriumError> {
        if !spec.matrix.is_zero_sum(self.tol) {
            return Err(EquilibriumError::NotZeroSum);
        }
        let u = Utilities::of(&spec.matrix, spec.objective);
        let maximin = StrategyId::BOTH
            .iter()
            .map(|&r| StrategyId::BOTH.iter().map(|&c| u.p1(r, c)).fold(f64::INFINITY, f64::min))
            .fold(f64::NEG_INFINITY, f64::max);
        let minimax = StrategyId::BOTH
            .iter()
            .map(|&c| StrategyId::BOTH.iter().map(|&r| u.p1(r, c)).fold(f64::NEG_INFINITY, f64::max))
            .fold(f64::INFINITY, f64::min);
        let utility_value = if (maximin - minimax).abs() <= self.tol {
            maximin
        } else {
            let m = self.mixed_nash_2x2(spec)?;
            expected_utility(&u, m)
        };
        Ok(match spec.objective {
            Objective::Maximize => utility_value,
            Objective::Minimize => -utility_value,
        })
    }

    /// Checks T > R > P > S and 2R > T + S for both players, reading payoffs
    /// as rewards under the game's objective.
    pub fn is_prisoners_dilemma(&self, spec: &GameSpec, cooperate: StrategyId) -> bool {
        let u = Utilities::of(&spec.matrix, spec.objective);
        let (c, d) = (cooperate, cooperate.other());
        let ordered = |t: f64, r: f64, p: f64, s: f64| {
            t > r + self.tol && r > p + self.tol && p > s + self.tol && 2.0 * r > t + s + self.tol
        };
        ordered(u.p1(d, c), u.p1(c, c), u.p1(d, d), u.p1(c, d))
            && ordered(u.p2(c, d), u.p2(c, c), u.p2(d, d), u.p2(d, c))
    }

    pub fn analyze(&self, spec: &GameSpec) -> EquilibriumReport {
        let (dominant_p1, dominant_p2) = self.dominant_strategies(spec);
        let (mixed_equilibrium, mixed_note) = match self.mixed_nash_2x2(spec) {
            Ok(m) => (Some(m), None),
            Err(e) => (None, Some(e.to_string())),
        };
        EquilibriumReport {
            game_id: spec.id.clone(),
            objective: spec.objective,
            pure_equilibria: self.pure_nash(spec),
            mixed_equilibrium,
            mixed_note,
            dominant_p1,
            dominant_p2,
            zero_sum_value: self.zero_sum_value(spec).ok(),
            pd_ordering_ok: self.is_prisoners_dilemma(spec, spec.cooperate),
        }
    }
}

fn expected_utility(u: &Utilities, m: MixedProfile) -> f64 {
    let pr = [m.p1_prob_strategy0, 1.0 - m.p1_prob_strategy0];
    let pc = [m.p2_prob_strategy0, 1.0 - m.p2_prob_strategy0];
    let mut total = 0.0;
    for r in StrategyId::BOTH {
        for c in StrategyId::BOTH {
            total += pr[r.index()] * pc[c.index()] * u.p1(r, c);
        }
    }
    total
}

/// Expected payoffs `(p1, p2)` of a mixed profile in raw payoff units.
pub fn expected_payoffs(matrix: &PayoffMatrix, m: MixedProfile) -> (f64, f64) {
    let pr = [m.p1_prob_strategy0, 1.0 - m.p1_prob_strategy0];
    let pc = [m.p2_prob_strategy0, 1.0 - m.p2_prob_strategy0];
    matrix.iter().fold((0.0, 0.0), |(a, b), (r, c, (x, y))| {
        let w = pr[r.index()] * pc[c.index()];
        (a + w * x, b + w * y)
    })
}

pub fn pure_nash(spec: &GameSpec) -> Vec<Profile> {
    Analyzer::default().pure_nash(spec)
}

pub fn dominant_strategies(spec: &GameSpec) -> (Option<StrategyId>, Option<StrategyId>) {
    Analyzer::default().dominant_strategies(spec)
}

pub fn mixed_nash_2x2(spec: &GameSpec) -> Result<MixedProfile, EquilibriumError> {
    Analyzer::default().mixed_nash_2x2(spec)
}

pub fn zero_sum_value(spec: &GameSpec) -> Result<f64, EquilibriumError> {
    Analyzer::default().zero_sum_value(spec)
}

pub fn is_prisoners_dilemma(spec: &GameSpec, cooperate: StrategyId) -> bool {
    Analyzer::default().is_prisoners_dilemma(spec, cooperate)
}

pub fn analyze(spec: &GameSpec) -> EquilibriumReport {
    Analyzer::default().analyze(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::PayoffMatrix;
    use proptest::prelude::*;
    use StrategyId::{First as A, Second as B};

    fn game(cells: [[(f64, f64); 2]; 2], objective: Objective) -> GameSpec {
        GameSpec::new("g", "custom", ["A", "B"], PayoffMatrix::new(cells), 1, objective).unwrap()
    }

    fn pd_penalties() -> GameSpec {
        let mut g = GameSpec::prisoners_dilemma_example();
        g.objective = Objective::Minimize;
        g
    }

    #[test]
    fn pure_nash_examples() {
        let pd = GameSpec::prisoners_dilemma_example();
        assert_eq!(pure_nash(&pd), vec![Profile { p1: B, p2: B }]);
        assert!(pure_nash(&GameSpec::zero_sum_example()).is_empty());
        let flat = game([[(3.0, 3.0); 2]; 2], Objective::Maximize);
        assert_eq!(pure_nash(&flat).len(), 4);
    }

    #[test]
    fn dominance_examples() {
        assert_eq!(dominant_strategies(&GameSpec::prisoners_dilemma_example()), (Some(B), Some(B)));
        assert_eq!(dominant_strategies(&GameSpec::zero_sum_example()), (None, None));
        let flat = game([[(3.0, 3.0); 2]; 2], Objective::Maximize);
        assert_eq!(dominant_strategies(&flat), (None, None));
        // read as penalties the cooperate strategy dominates
        assert_eq!(dominant_strategies(&pd_penalties()), (Some(A), Some(A)));
    }

    #[test]
    fn mixed_examples() {
        let m = mixed_nash_2x2(&GameSpec::zero_sum_example()).unwrap();
        assert_eq!(m, MixedProfile { p1_prob_strategy0: 0.5, p2_prob_strategy0: 0.5 });
        let coord = game([[(1.0, 1.0), (0.0, 0.0)], [(0.0, 0.0), (1.0, 1.0)]], Objective::Maximize);
        let m = mixed_nash_2x2(&coord).unwrap();
        assert_eq!((m.p1_prob_strategy0, m.p2_prob_strategy0), (0.5, 0.5));
        assert_eq!(
            mixed_nash_2x2(&GameSpec::prisoners_dilemma_example()),
            Err(EquilibriumError::DominancePresent)
        );
        let flat = game([[(3.0, 3.0); 2]; 2], Objective::Maximize);
        assert_eq!(mixed_nash_2x2(&flat), Err(EquilibriumError::Degenerate));
    }

    #[test]
    fn zero_sum_values() {
        assert_eq!(zero_sum_value(&GameSpec::zero_sum_example()).unwrap(), 0.0);
        assert_eq!(
            zero_sum_value(&GameSpec::prisoners_dilemma_example()),
            Err(EquilibriumError::NotZeroSum)
        );
        let saddle = game([[(1.0, -1.0), (1.0, -1.0)], [(0.0, 0.0), (0.0, 0.0)]], Objective::Maximize);
        assert_eq!(zero_sum_value(&saddle).unwrap(), 1.0);
        assert_eq!(dominant_strategies(&saddle).0, Some(A));
    }

    #[test]
    fn prisoners_dilemma_ordering() {
        assert!(is_prisoners_dilemma(&GameSpec::prisoners_dilemma_example(), A));
        assert!(!is_prisoners_dilemma(&pd_penalties(), A));
        assert!(!is_prisoners_dilemma(&GameSpec::zero_sum_example(), A));
        assert!(!is_prisoners_dilemma(&GameSpec::prisoners_dilemma_example(), B));
    }

    #[test]
    fn report_bundles_everything() {
        let r = analyze(&GameSpec::zero_sum_example());
        assert_eq!(r.zero_sum_value, Some(0.0));
        assert!(r.mixed_equilibrium.is_some());
        assert!(!r.pd_ordering_ok);
        let r = analyze(&GameSpec::prisoners_dilemma_example());
        assert_eq!((r.dominant_p1, r.dominant_p2), (Some(B), Some(B)));
        assert!(r.mixed_equilibrium.is_none());
        assert!(r.mixed_note.unwrap().contains("dominant_strategies"));
        assert!(r.pd_ordering_ok);
    }

    fn cells() -> impl Strategy<Value = [[(f64, f64); 2]; 2]> {
        let v = || (-6i32..=6).prop_map(f64::from);
        prop::array::uniform2(prop::array::uniform2((v(), v())))
    }

    fn zero_sum_cells() -> impl Strategy<Value = [[(f64, f64); 2]; 2]> {
        prop::array::uniform2(prop::array::uniform2((-6i32..=6).prop_map(|x| (x as f64, -x as f64))))
    }

    fn objective() -> impl Strategy<Value = Objective> {
        prop_oneof![Just(Objective::Maximize), Just(Objective::Minimize)]
    }

    proptest! {
        #[test]
        fn mixed_profile_makes_opponent_indifferent(
            c in prop::array::uniform2(prop::array::uniform2((-10.0f64..10.0, -10.0f64..10.0))),
            obj in objective(),
        ) {
            let g = game(c, obj);
            if let Ok(m) = mixed_nash_2x2(&g) {
                let p = m.p1_prob_strategy0;
                let q = m.p2_prob_strategy0;
                let cell = |r: usize, k: usize| g.matrix.cells[r][k];
                // player 2's columns against p
                let col0 = p * cell(0, 0).1 + (1.0 - p) * cell(1, 0).1;
                let col1 = p * cell(0, 1).1 + (1.0 - p) * cell(1, 1).1;
                let row0 = q * cell(0, 0).0 + (1.0 - q) * cell(0, 1).0;
                let row1 = q * cell(1, 0).0 + (1.0 - q) * cell(1, 1).0;
                prop_assert!((col0 - col1).abs() < 1e-9, "{col0} vs {col1}");
                prop_assert!((row0 - row1).abs() < 1e-9, "{row0} vs {row1}");
            }
        }

        #[test]
        fn sense_duality(c in cells(), obj in objective()) {
            let g = game(c, obj);
            let mut dual = g.clone();
            dual.matrix = g.matrix.negated();
            dual.objective = obj.flipped();
            prop_assert_eq!(pure_nash(&g), pure_nash(&dual));
            prop_assert_eq!(dominant_strategies(&g), dominant_strategies(&dual));
            prop_assert_eq!(mixed_nash_2x2(&g), mixed_nash_2x2(&dual));
        }

        #[test]
        fn zero_sum_value_duality_and_antisymmetry(c in zero_sum_cells(), obj in objective()) {
            let g = game(c, obj);
            let v = zero_sum_value(&g).unwrap();
            let mut dual = g.clone();
            dual.matrix = g.matrix.negated();
            dual.objective = obj.flipped();
            prop_assert!((zero_sum_value(&dual).unwrap() + v).abs() < 1e-9);
            let mut swapped = g.clone();
            swapped.matrix = g.matrix.swapped_players();
            prop_assert!((zero_sum_value(&swapped).unwrap() + v).abs() < 1e-9);
        }

        #[test]
        fn listed_equilibria_pass_best_response(c in cells(), obj in objective()) {
            let g = game(c, obj);
            for prof in analyze(&g).pure_equilibria {
                let u = |x: f64| obj.utility(x);
                let (x, y) = g.matrix.cell(prof.p1, prof.p2);
                prop_assert!(u(x) >= u(g.matrix.cell(prof.p1.other(), prof.p2).0));
                prop_assert!(u(y) >= u(g.matrix.cell(prof.p1, prof.p2.other()).1));
            }
        }
    }
}
