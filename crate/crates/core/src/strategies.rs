//! Scripted policies used as baseline opponents and as end-to-end oracles.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equilibrium::{self, EquilibriumError};
use crate::game::{GameSpec, StrategyId};
use crate::seeding;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("sequence exhausted at round {0}")]
    SequenceExhausted(u32),
    #[error("inconsistent view: history has {history} entries at round {round}")]
    InconsistentView { history: usize, round: u32 },
    #[error("invalid policy: {0}")]
    Invalid(String),
}

/// What an agent can see when deciding.
#[derive(Debug, Clone, Copy)]
pub struct PolicyView<'a> {
    /// 1 or 2.
    pub own_index: u8,
    /// Past rounds as `(own_choice, opponent_choice)`.
    pub history: &'a [(StrategyId, StrategyId)],
    /// 1-based.
    pub round_index: u32,
    pub n_rounds_known: Option<u32>,
    pub game: &'a GameSpec,
    /// Per-run key mixed into stochastic draws.
    pub draw_key: u64,
}

impl PolicyView<'_> {
    fn check(&self) -> Result<(), PolicyError> {
        if self.history.len() as u32 + 1 != self.round_index {
            return Err(PolicyError::InconsistentView {
                history: self.history.len(),
                round: self.round_index,
            });
        }
        Ok(())
    }

    fn draw(&self, seed: u64) -> f64 {
        seeding::unit_draw(&[seed, self.draw_key, self.own_index as u64, self.round_index as u64])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScriptedPolicy {
    AlwaysFirst,
    AlwaysSecond,
    TitForTat,
    GrimTrigger,
    RandomMixed {
        /// Probability of the first strategy.
        p: f64,
        #[serde(default)]
        seed: u64,
    },
    NashMixed {
        #[serde(default)]
        seed: u64,
    },
    FixedSequence {
        sequence: Vec<StrategyId>,
    },
}

impl ScriptedPolicy {
    pub fn validate(&self) -> Result<(), PolicyError> {
        match self {
            ScriptedPolicy::RandomMixed { p, .. } if !(0.0..=1.0).contains(p) => {
                Err(PolicyError::Invalid(format!("probability {p} outside [0,1]")))
            }
            ScriptedPolicy::FixedSequence { sequence } if sequence.is_empty() => {
                Err(PolicyError::Invalid("fixed_sequence must be nonempty".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScriptedPolicy::AlwaysFirst => "always_first",
            ScriptedPolicy::AlwaysSecond => "always_second",
            ScriptedPolicy::TitForTat => "tit_for_tat",
            ScriptedPolicy::GrimTrigger => "grim_trigger",
            ScriptedPolicy::RandomMixed { .. } => "random_mixed",
            ScriptedPolicy::NashMixed { .. } => "nash_mixed",
            ScriptedPolicy::FixedSequence { .. } => "fixed_sequence",
        }
    }

    pub fn decide(&self, view: &PolicyView<'_>) -> Result<StrategyId, PolicyError> {
        view.check()?;
        let cooperate = view.game.cooperate;
        let defect = cooperate.other();
        Ok(match self {
            ScriptedPolicy::AlwaysFirst => StrategyId::First,
            ScriptedPolicy::AlwaysSecond => StrategyId::Second,
            ScriptedPolicy::TitForTat => view.history.last().map_or(cooperate, |&(_, opp)| opp),
            ScriptedPolicy::GrimTrigger => {
                if view.history.iter().any(|&(_, opp)| opp == defect) {
                    defect
                } else {
                    cooperate
                }
            }
            ScriptedPolicy::RandomMixed { p, seed } => sample(*p, view.draw(*seed)),
            ScriptedPolicy::NashMixed { seed } => {
                let g = view.game;
                match equilibrium::mixed_nash_2x2(g) {
                    Ok(m) => {
                        let p = if view.own_index == 1 { m.p1_prob_strategy0 } else { m.p2_prob_strategy0 };
                        sample(p, view.draw(*seed))
                    }
                    // A strictly dominant strategy is the unique equilibrium play.
                    Err(EquilibriumError::DominancePresent) => {
                        let (d1, d2) = equilibrium::dominant_strategies(g);
                        let own = if view.own_index == 1 { d1 } else { d2 };
                        match own {
                            Some(s) => s,
                            None => sample(0.5, view.draw(*seed)),
                        }
                    }
                    Err(_) => sample(0.5, view.draw(*seed)),
                }
            }
            ScriptedPolicy::FixedSequence { sequence } => *sequence
                .get(view.round_index as usize - 1)
                .ok_or(PolicyError::SequenceExhausted(view.round_index))?,
        })
    }
}

fn sample(p_first: f64, u: f64) -> StrategyId {
    if u < p_first {
        StrategyId::First
    } else {
        StrategyId::Second
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use StrategyId::{First as A, Second as B};

    fn view<'a>(game: &'a GameSpec, history: &'a [(StrategyId, StrategyId)], key: u64) -> PolicyView<'a> {
        PolicyView {
            own_index: 1,
            history,
            round_index: history.len() as u32 + 1,
            n_rounds_known: Some(game.n_rounds),
            game,
            draw_key: key,
        }
    }

    #[test]
    fn tit_for_tat() {
        let g = GameSpec::prisoners_dilemma_example();
        assert_eq!(ScriptedPolicy::TitForTat.decide(&view(&g, &[], 0)).unwrap(), A);
        assert_eq!(ScriptedPolicy::TitForTat.decide(&view(&g, &[(A, B)], 0)).unwrap(), B);
        assert_eq!(ScriptedPolicy::TitForTat.decide(&view(&g, &[(A, B), (B, A)], 0)).unwrap(), A);
    }

    #[test]
    fn cooperate_designation_drives_opening() {
        let mut g = GameSpec::prisoners_dilemma_example();
        g.cooperate = B;
        assert_eq!(ScriptedPolicy::TitForTat.decide(&view(&g, &[], 0)).unwrap(), B);
        assert_eq!(ScriptedPolicy::GrimTrigger.decide(&view(&g, &[(B, A)], 0)).unwrap(), A);
    }

    #[test]
    fn degenerate_random() {
        let g = GameSpec::zero_sum_example();
        for key in 0..50 {
            let v = view(&g, &[], key);
            assert_eq!(ScriptedPolicy::RandomMixed { p: 1.0, seed: 3 }.decide(&v).unwrap(), A);
            assert_eq!(ScriptedPolicy::RandomMixed { p: 0.0, seed: 3 }.decide(&v).unwrap(), B);
        }
    }

    #[test]
    fn random_mixed_frequency() {
        let g = GameSpec::zero_sum_example();
        for p in [0.1, 0.37, 0.5, 0.9] {
            let policy = ScriptedPolicy::RandomMixed { p, seed: 11 };
            let hits = (0..10_000u64)
                .filter(|&k| policy.decide(&view(&g, &[], k)).unwrap() == A)
                .count();
            let freq = hits as f64 / 10_000.0;
            assert!((freq - p).abs() <= 0.02, "p={p} freq={freq}");
        }
    }

    #[test]
    fn nash_mixed_falls_back_to_dominant() {
        let g = GameSpec::prisoners_dilemma_example();
        for key in 0..20 {
            assert_eq!(ScriptedPolicy::NashMixed { seed: 0 }.decide(&view(&g, &[], key)).unwrap(), B);
        }
        let zs = GameSpec::zero_sum_example();
        let picks: Vec<_> =
            (0..200).map(|k| ScriptedPolicy::NashMixed { seed: 0 }.decide(&view(&zs, &[], k)).unwrap()).collect();
        assert!(picks.contains(&A) && picks.contains(&B));
    }

    #[test]
    fn fixed_sequence_exhausts() {
        let g = GameSpec::prisoners_dilemma_example();
        let p = ScriptedPolicy::FixedSequence { sequence: vec![B, A] };
        assert_eq!(p.decide(&view(&g, &[], 0)).unwrap(), B);
        assert_eq!(p.decide(&view(&g, &[(B, B)], 0)).unwrap(), A);
        assert_eq!(p.decide(&view(&g, &[(B, B), (A, A)], 0)), Err(PolicyError::SequenceExhausted(3)));
        assert!(ScriptedPolicy::FixedSequence { sequence: vec![] }.validate().is_err());
        assert!(ScriptedPolicy::RandomMixed { p: 1.5, seed: 0 }.validate().is_err());
    }

    #[test]
    fn inconsistent_view_rejected() {
        let g = GameSpec::prisoners_dilemma_example();
        let mut v = view(&g, &[(A, A)], 0);
        v.round_index = 5;
        assert!(matches!(ScriptedPolicy::TitForTat.decide(&v), Err(PolicyError::InconsistentView { .. })));
    }

    #[test]
    fn config_shape() {
        let p: ScriptedPolicy = serde_json::from_str(r#"{"kind":"random_mixed","p":0.3}"#).unwrap();
        assert_eq!(p, ScriptedPolicy::RandomMixed { p: 0.3, seed: 0 });
        let p: ScriptedPolicy = serde_json::from_str(r#"{"kind":"fixed_sequence","sequence":[0,1]}"#).unwrap();
        assert_eq!(p, ScriptedPolicy::FixedSequence { sequence: vec![A, B] });
    }

    fn strategy() -> impl Strategy<Value = StrategyId> {
        prop_oneof![Just(A), Just(B)]
    }

    proptest! {
        #[test]
        fn grim_trigger_is_absorbing(opp in prop::collection::vec(strategy(), 1..12)) {
            let g = GameSpec::prisoners_dilemma_example();
            let mut history = Vec::new();
            let mut triggered = false;
            for &o in &opp {
                let mine = ScriptedPolicy::GrimTrigger.decide(&view(&g, &history, 0)).unwrap();
                if triggered {
                    prop_assert_eq!(mine, B);
                }
                if mine == B {
                    triggered = true;
                }
                history.push((mine, o));
            }
        }

        #[test]
        fn replay_determinism(key in any::<u64>(), seed in any::<u64>(), p in 0.0f64..=1.0) {
            let g = GameSpec::zero_sum_example();
            let policy = ScriptedPolicy::RandomMixed { p, seed };
            let a = policy.decide(&view(&g, &[], key)).unwrap();
            let b = policy.decide(&view(&g, &[], key)).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
