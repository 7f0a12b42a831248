//! Tournament harness for 2x2 matrix games played by language-model agents,
//! deterministic mock providers and scripted strategies.
//!
//! The building blocks, bottom-up:
//!
//! - [`game`]: payoff matrices, transcripts, outcome normalization.
//! - [`equilibrium`]: exact dominance, Nash and zero-sum value analysis.
//! - [`strategies`]: scripted policies (tit-for-tat, grim trigger, ...).
//! - [`prompting`]: multilingual prompt templates and language packs.
//! - [`gateway`]: chat-completion providers, reply parsing, retries.
//! - [`config`] and [`orchestrator`]: experiment expansion and execution.
//! - [`results`], [`metrics`], [`report`]: persistence and analysis.

pub mod equilibrium;
pub mod game;
pub mod gateway;
pub mod prompting;
pub mod seeding;
pub mod strategies;
pub mod config;
pub mod orchestrator;
pub mod metrics;
pub mod report;
pub mod results;
