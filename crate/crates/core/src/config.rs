//! Experiment configuration: games, axes, agents, providers, seeds.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::game::{validate_game, GameDef, GameSpec, NormalizationMode};
use crate::gateway::ProviderConfig;
use crate::prompting::{self, LanguagePack};
use crate::strategies::ScriptedPolicy;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("invalid config: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

/// Display names of the two agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentNames {
    pub names: [String; 2],
}

impl Default for AgentNames {
    fn default() -> Self {
        Self { names: ["Agent1".to_string(), "Agent2".to_string()] }
    }
}

/// How one agent decides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentBackend {
    /// Decides directly from the game state; no prompt is rendered.
    Scripted { policy: ScriptedPolicy },
    /// Sends rendered prompts to a configured provider.
    Provider { provider: String },
    /// Offline provider: either a policy answering with its label or a
    /// fixed list of replies.
    Mock {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        policy: Option<ScriptedPolicy>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        replies: Option<Vec<String>>,
    },
}

/// A population under test: typically one LLM playing both seats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBinding {
    pub id: String,
    pub agent1: AgentBackend,
    /// Defaults to `agent1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent2: Option<AgentBackend>,
}

impl ModelBinding {
    pub fn backends(&self) -> [&AgentBackend; 2] {
        [&self.agent1, self.agent2.as_ref().unwrap_or(&self.agent1)]
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment_id: String,
    /// Language pack directory, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pack: Option<String>,
    pub games: Vec<GameDef>,
    pub languages: Vec<String>,
    /// Personality pairs `(agent1, agent2)`; an empty trait means none.
    pub personalities: Vec<[String; 2]>,
    /// When set, `(a, b)` and `(b, a)` are the same combination.
    #[serde(default = "yes")]
    pub unordered_pairs: bool,
    pub rounds_known: Vec<bool>,
    pub opponent_personality_known: Vec<bool>,
    #[serde(default)]
    pub agents: AgentNames,
    pub models: Vec<ModelBinding>,
    #[serde(default)]
    pub providers: Vec<ProviderConfig>,
    pub repetitions: u32,
    pub master_seed: u64,
    #[serde(default)]
    pub normalization: NormalizationMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parallelism: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::from_json(&text).map_err(|source| ConfigError::Parse { path: path.into(), source })
    }

    /// Pack directory resolved against the config file's directory.
    pub fn pack_path(&self, config_path: &Path) -> Option<PathBuf> {
        let pack = self.pack.as_ref()?;
        let base = config_path.parent().unwrap_or(Path::new("."));
        Some(base.join(pack))
    }

    /// SHA-256 over the canonical serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn game_specs(&self) -> Result<Vec<GameSpec>, ConfigError> {
        self.games
            .iter()
            .map(|g| g.build().map_err(|e| ConfigError::Invalid(vec![format!("game {}: {e}", g.id)])))
            .collect()
    }

    pub fn provider(&self, id: &str) -> Option<&ProviderConfig> {
        self.providers.iter().find(|p| p.provider_id == id)
    }

    /// Distinct personality combinations after applying `unordered_pairs`.
    pub fn personality_pairs(&self) -> Vec<[String; 2]> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for pair in &self.personalities {
            let key = if self.unordered_pairs {
                let mut k = pair.clone();
                k.sort();
                k
            } else {
                pair.clone()
            };
            if seen.insert(key) {
                out.push(pair.clone());
            }
        }
        out
    }

    /// Provider ids referenced by any model.
    pub fn referenced_providers(&self) -> BTreeSet<&str> {
        self.models
            .iter()
            .flat_map(|m| m.backends())
            .filter_map(|b| match b {
                AgentBackend::Provider { provider } => Some(provider.as_str()),
                _ => None,
            })
            .collect()
    }

    /// Schema and consistency findings; empty when valid.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.experiment_id.trim().is_empty() {
            out.push("experiment_id must be non-empty".into());
        }
        let axes: [(&str, bool); 6] = [
            ("games", self.games.is_empty()),
            ("languages", self.languages.is_empty()),
            ("personalities", self.personalities.is_empty()),
            ("rounds_known", self.rounds_known.is_empty()),
            ("opponent_personality_known", self.opponent_personality_known.is_empty()),
            ("models", self.models.is_empty()),
        ];
        for (name, empty) in axes {
            if empty {
                out.push(format!("axis `{name}` is empty"));
            }
        }
        if self.repetitions == 0 {
            out.push("repetitions must be >= 1".into());
        }
        if self.parallelism == Some(0) {
            out.push("parallelism must be >= 1".into());
        }
        duplicates(self.languages.iter().map(String::as_str), "language", &mut out);
        duplicates(self.games.iter().map(|g| g.id.as_str()), "game id", &mut out);
        duplicates(self.models.iter().map(|m| m.id.as_str()), "model id", &mut out);
        duplicates(self.providers.iter().map(|p| p.provider_id.as_str()), "provider id", &mut out);
        duplicates(self.rounds_known.iter().map(|b| if *b { "true" } else { "false" }), "rounds_known value", &mut out);
        duplicates(
            self.opponent_personality_known.iter().map(|b| if *b { "true" } else { "false" }),
            "opponent_personality_known value",
            &mut out,
        );

        for g in &self.games {
            let report = validate_game(g);
            for v in report.violations() {
                out.push(format!("game {}: {v}", g.id));
            }
            let needed = prompting::required_placeholders(&g.kind)
                .iter()
                .filter(|p| p.starts_with("weight"))
                .count();
            if g.weights.len() < needed {
                out.push(format!("game {}: kind {} needs {needed} weights, found {}", g.id, g.kind, g.weights.len()));
            }
        }
        for m in &self.models {
            for (i, b) in m.backends().into_iter().enumerate() {
                let who = format!("model {} agent{}", m.id, i + 1);
                match b {
                    AgentBackend::Scripted { policy } => {
                        if let Err(e) = policy.validate() {
                            out.push(format!("{who}: {e}"));
                        }
                    }
                    AgentBackend::Provider { provider } => {
                        if self.provider(provider).is_none() {
                            out.push(format!("{who}: unknown provider {provider}"));
                        }
                    }
                    AgentBackend::Mock { policy, replies } => match (policy, replies) {
                        (Some(p), None) => {
                            if let Err(e) = p.validate() {
                                out.push(format!("{who}: {e}"));
                            }
                        }
                        (None, Some(_)) => {}
                        _ => out.push(format!("{who}: mock needs exactly one of `policy` or `replies`")),
                    },
                }
            }
        }
        for p in &self.providers {
            out.extend(p.validate());
        }
        out
    }

    /// Checks that `pack` has a template for every (game kind, language).
    pub fn check_pack(&self, pack: &LanguagePack) -> Vec<String> {
        let mut out = Vec::new();
        let kinds: BTreeSet<&str> = self.games.iter().map(|g| g.kind.as_str()).collect();
        for kind in kinds {
            for lang in &self.languages {
                if pack.get(kind, lang).is_none() {
                    out.push(format!("language pack has no {kind} template for language {lang}"));
                }
            }
        }
        out
    }
}

fn duplicates<'a>(items: impl Iterator<Item = &'a str>, what: &str, out: &mut Vec<String>) {
    let mut seen = BTreeSet::new();
    for it in items {
        if !seen.insert(it) {
            out.push(format!("duplicate {what} {it:?}"));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample() -> ExperimentConfig {
        serde_json::from_str(
            r#"{
            "experiment_id": "t",
            "games": [{"id":"pd","kind":"prisoners_dilemma","strategies":["Option A","Option B"],
                       "matrix":[[[6,6],[0,10]],[[10,0],[2,2]]],"n_rounds":10,"objective":"maximize",
                       "weights":[6,0,10,2]}],
            "languages": ["en"],
            "personalities": [["cooperative","cooperative"],["cooperative","selfish"],["selfish","cooperative"]],
            "rounds_known": [true,false],
            "opponent_personality_known": [false],
            "models": [{"id":"m","agent1":{"kind":"mock","policy":{"kind":"tit_for_tat"}},
                        "agent2":{"kind":"scripted","policy":{"kind":"always_second"}}}],
            "repetitions": 2,
            "master_seed": 1
        }"#,
        )
        .unwrap()
    }

    #[test]
    fn sample_is_valid() {
        let c = sample();
        assert!(c.validate().is_empty(), "{:?}", c.validate());
        assert_eq!(c.agents.names, ["Agent1", "Agent2"]);
        assert_eq!(c.personality_pairs().len(), 2);
    }

    #[test]
    fn ordered_pairs_stay_distinct() {
        let mut c = sample();
        c.unordered_pairs = false;
        assert_eq!(c.personality_pairs().len(), 3);
    }

    #[test]
    fn empty_axis_and_bad_refs() {
        let mut c = sample();
        c.languages.clear();
        c.models[0].agent1 = AgentBackend::Provider { provider: "nope".into() };
        let f = c.validate();
        assert!(f.iter().any(|s| s.contains("`languages` is empty")));
        assert!(f.iter().any(|s| s.contains("unknown provider nope")));
    }

    #[test]
    fn weights_required_per_kind() {
        let mut c = sample();
        c.games[0].weights.truncate(2);
        assert!(c.validate().iter().any(|s| s.contains("needs 4 weights")));
    }

    #[test]
    fn hash_tracks_content() {
        let a = sample();
        let mut b = sample();
        assert_eq!(a.hash(), b.hash());
        b.master_seed = 2;
        assert_ne!(a.hash(), b.hash());
    }
}
