//! Expands a configuration into game instances and plays them.
//!
//! Instances run in parallel up to a bound; rounds inside an instance are
//! strictly sequential and both agents' prompts for a round are rendered
//! from the same pre-round transcript. Each instance writes its own shard;
//! shards are merged in expansion order so output files do not depend on
//! scheduling.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{AgentBackend, ConfigError, ExperimentConfig};
use crate::game::{total_payoffs, GameSpec, StrategyId, Transcript};
use crate::gateway::{
    mock_provider, Channel, ChatProvider, ChatRequestBody, Decision, DecisionContext, HttpProvider,
    MockScript, ProviderConfig, ProviderRuntime, SystemClock,
};
use crate::prompting::{
    format_history, render, Flags, LanguagePack, PlaceholderMap, PromptTemplate, FLAG_GAME_LENGTH, FLAG_INTRO,
    FLAG_OPPONENT_INTRO,
};
use crate::results::{
    read_jsonl, DecisionRecord, DecisionStatus, ExperimentManifest, ManifestStatus, RequestLogEntry, ResultLine,
    ResultsError, RunRecord, RunStatus, MANIFEST_FILE, REQUESTS_FILE, RESULTS_FILE,
};
use crate::seeding;
use crate::strategies::{PolicyView, ScriptedPolicy};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("stale results directory {dir}: it holds results for config {found}, this run is {expected}")]
    Stale { dir: PathBuf, found: String, expected: String },
    #[error(transparent)]
    Results(#[from] ResultsError),
    #[error("provider setup failed: {0}")]
    Provider(String),
}

/// One fully specified game run.
#[derive(Debug, Clone, PartialEq)]
pub struct GameInstance {
    /// Stable hash of the axis values.
    pub instance_id: String,
    pub model: String,
    pub game: String,
    pub language: String,
    pub personalities: [String; 2],
    pub rounds_known: Option<bool>,
    pub opponent_personality_known: Option<bool>,
    pub repetition: u32,
    pub seed: u64,
}

impl GameInstance {
    /// The configuration this instance repeats, ignoring repetition.
    pub fn variant_key(&self) -> (String, String, [String; 2], Option<bool>, Option<bool>) {
        (
            self.game.clone(),
            self.language.clone(),
            self.personalities.clone(),
            self.rounds_known,
            self.opponent_personality_known,
        )
    }
}

fn instance_id(parts: &[String]) -> String {
    let canonical = serde_json::to_vec(parts).expect("strings serialize");
    hex::encode(&Sha256::digest(&canonical)[..8])
}

fn opt(b: Option<bool>) -> String {
    match b {
        Some(true) => "true".into(),
        Some(false) => "false".into(),
        None => "n/a".into(),
    }
}

/// Ordered cross product: models, games, languages, personality pairs,
/// rounds knowledge, opponent-personality knowledge, repetitions. Axes a
/// game does not vary collapse to a single "not applicable" value.
pub fn expand_config(cfg: &ExperimentConfig) -> Result<Vec<GameInstance>, ConfigError> {
    let findings = cfg.validate();
    if !findings.is_empty() {
        return Err(ConfigError::Invalid(findings));
    }
    let pairs = cfg.personality_pairs();
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for model in &cfg.models {
        for game in &cfg.games {
            let rk: Vec<Option<bool>> = if game.varies_rounds_known() {
                cfg.rounds_known.iter().copied().map(Some).collect()
            } else {
                vec![None]
            };
            let ok: Vec<Option<bool>> = if game.varies_opponent_personality_known() {
                cfg.opponent_personality_known.iter().copied().map(Some).collect()
            } else {
                vec![None]
            };
            for language in &cfg.languages {
                for pair in &pairs {
                    for &rounds_known in &rk {
                        for &opp in &ok {
                            for repetition in 0..cfg.repetitions {
                                let id = instance_id(&[
                                    model.id.clone(),
                                    game.id.clone(),
                                    language.clone(),
                                    pair[0].clone(),
                                    pair[1].clone(),
                                    opt(rounds_known),
                                    opt(opp),
                                    repetition.to_string(),
                                ]);
                                if !seen.insert(id.clone()) {
                                    return Err(ConfigError::Invalid(vec![format!("instance id collision on {id}")]));
                                }
                                let seed = seeding::derive(&[&cfg.master_seed.to_le_bytes(), id.as_bytes()]);
                                out.push(GameInstance {
                                    instance_id: id,
                                    model: model.id.clone(),
                                    game: game.id.clone(),
                                    language: language.clone(),
                                    personalities: pair.clone(),
                                    rounds_known,
                                    opponent_personality_known: opp,
                                    repetition,
                                    seed,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Distinct game configurations per model: instances with languages and
/// repetitions factored out.
pub fn games_per_model(instances: &[GameInstance]) -> usize {
    let Some(first) = instances.first() else { return 0 };
    instances
        .iter()
        .filter(|i| i.model == first.model)
        .map(|i| (i.game.clone(), i.personalities.clone(), i.rounds_known, i.opponent_personality_known))
        .collect::<BTreeSet<_>>()
        .len()
}

/// Decisions made in the first round of every instance.
pub fn first_round_decisions(instances: &[GameInstance]) -> usize {
    2 * instances.len()
}

/// Result of playing one instance.
#[derive(Debug, Clone)]
pub struct InstanceOutcome {
    pub run: RunRecord,
    pub decisions: Vec<DecisionRecord>,
    pub requests: Vec<RequestLogEntry>,
}

enum Seat {
    Scripted(ScriptedPolicy),
    Gateway { channel: Channel, offline: bool },
}

struct SeatResult {
    record: DecisionRecord,
    choice: Result<StrategyId, SeatFailure>,
    requests: Vec<RequestLogEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum SeatFailure {
    Invalid,
    Unavailable,
}

/// Plays configured instances.
pub struct Orchestrator {
    cfg: ExperimentConfig,
    games: BTreeMap<String, Arc<GameSpec>>,
    pack: LanguagePack,
    remote: BTreeMap<String, Channel>,
    offline: Arc<ProviderRuntime>,
    mock: bool,
}

impl Orchestrator {
    /// Builds HTTP providers for every referenced provider unless `mock`
    /// is set, in which case nothing ever touches the network.
    pub fn new(cfg: ExperimentConfig, pack: LanguagePack, mock: bool) -> Result<Self, RunError> {
        let mut providers: BTreeMap<String, Arc<dyn ChatProvider>> = BTreeMap::new();
        if !mock {
            let mut missing = Vec::new();
            for id in cfg.referenced_providers() {
                let pc = cfg.provider(id).expect("validated").clone();
                match HttpProvider::from_env(pc) {
                    Ok(p) => {
                        providers.insert(id.to_string(), Arc::new(p));
                    }
                    Err(e) => missing.push(e.to_string()),
                }
            }
            if !missing.is_empty() {
                return Err(RunError::Provider(missing.join("; ")));
            }
        }
        Self::with_providers(cfg, pack, providers, mock, Arc::new(SystemClock::default()))
    }

    /// Builds an orchestrator over caller-supplied providers.
    pub fn with_providers(
        cfg: ExperimentConfig,
        pack: LanguagePack,
        providers: BTreeMap<String, Arc<dyn ChatProvider>>,
        mock: bool,
        clock: Arc<dyn crate::gateway::Clock>,
    ) -> Result<Self, RunError> {
        let mut findings = cfg.validate();
        findings.extend(cfg.check_pack(&pack));
        if !findings.is_empty() {
            return Err(ConfigError::Invalid(findings).into());
        }
        let games = cfg
            .game_specs()?
            .into_iter()
            .map(|g| (g.id.clone(), Arc::new(g)))
            .collect();
        let mut remote = BTreeMap::new();
        if !mock {
            for id in cfg.referenced_providers() {
                let pc = cfg.provider(id).expect("validated").clone();
                let provider = providers
                    .get(id)
                    .cloned()
                    .ok_or_else(|| RunError::Provider(format!("no provider instance for {id}")))?;
                let runtime = Arc::new(ProviderRuntime::new(&pc, clock.clone()));
                remote.insert(id.to_string(), Channel::new(Arc::new(pc), provider, runtime));
            }
        }
        Ok(Self { cfg, games, pack, remote, offline: Arc::new(ProviderRuntime::unlimited()), mock })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn is_mock(&self) -> bool {
        self.mock
    }

    /// Hash identifying this run's outputs: config plus mock mode.
    pub fn config_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.cfg.hash().as_bytes());
        h.update(if self.mock { b"mock" as &[u8] } else { b"live" });
        hex::encode(h.finalize())
    }

    pub fn instances(&self) -> Result<Vec<GameInstance>, ConfigError> {
        expand_config(&self.cfg)
    }

    fn offline_channel(&self, provider_id: String, script: MockScript) -> Channel {
        let cfg = ProviderConfig::offline(&provider_id);
        Channel::new(Arc::new(cfg), Arc::new(mock_provider(script)), self.offline.clone())
    }

    fn seat(&self, backend: &AgentBackend) -> Seat {
        match backend {
            AgentBackend::Scripted { policy } => Seat::Scripted(policy.clone()),
            AgentBackend::Mock { policy, replies } => {
                let (id, script) = match (policy, replies) {
                    (Some(p), _) => (format!("mock:{}", p.name()), MockScript::Policy(p.clone())),
                    (None, Some(r)) => ("mock:replies".to_string(), MockScript::Replies(r.clone())),
                    (None, None) => unreachable!("validated"),
                };
                Seat::Gateway { channel: self.offline_channel(id, script), offline: true }
            }
            AgentBackend::Provider { provider } if self.mock => {
                let pc = self.cfg.provider(provider).expect("validated");
                let policy = pc.mock.clone().unwrap_or(ScriptedPolicy::RandomMixed { p: 0.5, seed: 0 });
                Seat::Gateway {
                    channel: self.offline_channel(format!("mock:{provider}"), MockScript::Policy(policy)),
                    offline: true,
                }
            }
            AgentBackend::Provider { provider } => {
                Seat::Gateway { channel: self.remote[provider.as_str()].clone(), offline: false }
            }
        }
    }

    fn placeholders(
        &self,
        inst: &GameInstance,
        game: &GameSpec,
        template: &PromptTemplate,
        t: &Transcript,
        seat: usize,
    ) -> (PlaceholderMap, Flags) {
        let names = &self.cfg.agents.names;
        let (me, opp) = (seat, 1 - seat);
        let mut v = PlaceholderMap::new();
        v.set("currentPlayerName", names[me].clone())
            .set("opponent1", names[opp].clone())
            .set("strategy1", template.strategy_labels[0].clone())
            .set("strategy2", template.strategy_labels[1].clone())
            .set("nRounds", game.n_rounds.to_string())
            .set("currentRound", (t.len() + 1).to_string())
            .set("history", format_history(t, template, me as u8 + 1, &names[opp]))
            .set_weights(&game.weights);
        let own_trait = &inst.personalities[me];
        let opp_trait = &inst.personalities[opp];
        let mut flags = Flags::new();
        if !own_trait.is_empty() {
            v.set("personality", own_trait.clone());
            flags.set(FLAG_INTRO, true);
        }
        if inst.opponent_personality_known == Some(true) && !opp_trait.is_empty() {
            v.set("opponentPersonality", opp_trait.clone());
            flags.set(FLAG_OPPONENT_INTRO, true);
        }
        flags.set(FLAG_GAME_LENGTH, inst.rounds_known == Some(true));
        (v, flags)
    }

    /// Renders the prompt agent `seat` (0 or 1) sees before the next round.
    pub fn render_prompt(&self, inst: &GameInstance, t: &Transcript, seat: usize) -> Result<String, String> {
        let game = self.games.get(&inst.game).ok_or_else(|| format!("unknown game {}", inst.game))?;
        let template = self
            .pack
            .get(&game.kind, &inst.language)
            .ok_or_else(|| format!("no {} template for {}", game.kind, inst.language))?;
        let (v, flags) = self.placeholders(inst, game, template, t, seat);
        render(template, &v, &flags).map_err(|e| e.to_string())
    }

    fn decide(
        &self,
        inst: &GameInstance,
        seat_no: usize,
        seat: &Seat,
        prompt: Option<&str>,
        t: &Transcript,
        labels: &[String; 2],
    ) -> SeatResult {
        let round = t.len() as u32 + 1;
        let agent = seat_no as u8 + 1;
        let history: Vec<(StrategyId, StrategyId)> = t
            .rounds()
            .iter()
            .map(|r| if seat_no == 0 { (r.choice_p1, r.choice_p2) } else { (r.choice_p2, r.choice_p1) })
            .collect();
        let game = t.game();
        let view = PolicyView {
            own_index: agent,
            history: &history,
            round_index: round,
            n_rounds_known: (inst.rounds_known == Some(true)).then_some(game.n_rounds),
            game,
            draw_key: inst.seed,
        };
        let base = DecisionRecord {
            instance_id: inst.instance_id.clone(),
            round,
            agent,
            status: DecisionStatus::Applied,
            chosen: None,
            label: None,
            raw_reply: None,
            attempts: 0,
            provider_id: String::new(),
            latency_ms: 0,
            prompt_sha256: prompt.map(|p| hex::encode(Sha256::digest(p.as_bytes()))),
            error: None,
        };
        match seat {
            Seat::Scripted(policy) => {
                let provider_id = format!("scripted:{}", policy.name());
                match policy.decide(&view) {
                    Ok(s) => SeatResult {
                        record: DecisionRecord {
                            chosen: Some(s),
                            label: Some(labels[s.index()].clone()),
                            raw_reply: Some(labels[s.index()].clone()),
                            attempts: 1,
                            provider_id,
                            ..base
                        },
                        choice: Ok(s),
                        requests: Vec::new(),
                    },
                    Err(e) => SeatResult {
                        record: DecisionRecord {
                            status: DecisionStatus::Invalid,
                            attempts: 1,
                            provider_id,
                            error: Some(e.to_string()),
                            ..base
                        },
                        choice: Err(SeatFailure::Invalid),
                        requests: Vec::new(),
                    },
                }
            }
            Seat::Gateway { channel, .. } => {
                let prompt = prompt.expect("gateway seats get prompts");
                let ctx = DecisionContext { view };
                let result = channel.request_decision(prompt, labels, Some(&ctx));
                let body = ChatRequestBody::new(&channel.cfg, prompt);
                let log = match &result {
                    Ok(d) => d.log.clone(),
                    Err(e) => e.log().to_vec(),
                };
                let requests = log
                    .into_iter()
                    .map(|attempt| RequestLogEntry {
                        instance_id: inst.instance_id.clone(),
                        round,
                        agent,
                        provider_id: channel.cfg.provider_id.clone(),
                        request: body.clone(),
                        attempt,
                    })
                    .collect();
                let provider_id = channel.cfg.provider_id.clone();
                match result {
                    Ok(Decision { chosen, raw_reply, attempts, latency_ms, .. }) => SeatResult {
                        record: DecisionRecord {
                            chosen: Some(chosen),
                            label: Some(labels[chosen.index()].clone()),
                            raw_reply: Some(raw_reply),
                            attempts,
                            latency_ms,
                            provider_id,
                            ..base
                        },
                        choice: Ok(chosen),
                        requests,
                    },
                    Err(e) => {
                        let failure =
                            if e.is_invalid_decision() { SeatFailure::Invalid } else { SeatFailure::Unavailable };
                        let raw_reply = e.log().iter().rev().find_map(|a| a.reply.clone());
                        SeatResult {
                            record: DecisionRecord {
                                status: DecisionStatus::Invalid,
                                raw_reply,
                                attempts: e.log().len() as u32,
                                provider_id,
                                error: Some(e.to_string()),
                                ..base
                            },
                            choice: Err(failure),
                            requests,
                        }
                    }
                }
            }
        }
    }

    pub fn run_game_instance(&self, inst: &GameInstance) -> InstanceOutcome {
        let model = self.cfg.models.iter().find(|m| m.id == inst.model).expect("instance model exists");
        let game = self.games[&inst.game].clone();
        let template = self.pack.get(&game.kind, &inst.language).expect("pack checked");
        let labels = template.strategy_labels.clone();
        let seats = model.backends().map(|b| self.seat(b));

        let mut t = Transcript::new(game.clone(), inst.seed);
        let mut decisions = Vec::new();
        let mut requests = Vec::new();
        let mut status = RunStatus::Complete;
        let mut error = None;

        while !t.is_complete() {
            // Both prompts come from the pre-round transcript: neither agent
            // sees the other's current choice.
            let mut prompts: [Option<String>; 2] = [None, None];
            let mut render_error = None;
            for (i, seat) in seats.iter().enumerate() {
                if let Seat::Gateway { .. } = seat {
                    match self.render_prompt(inst, &t, i) {
                        Ok(p) => prompts[i] = Some(p),
                        Err(e) => render_error = Some(e),
                    }
                }
            }
            if let Some(e) = render_error {
                status = RunStatus::InvalidDecision;
                error = Some(format!("round {}: prompt rendering failed: {e}", t.len() + 1));
                break;
            }

            let both_remote = seats.iter().all(|s| matches!(s, Seat::Gateway { offline: false, .. }));
            let results: Vec<SeatResult> = if both_remote {
                std::thread::scope(|s| {
                    let handles: Vec<_> = (0..2)
                        .map(|i| {
                            let (seat, prompt, t, labels) = (&seats[i], prompts[i].as_deref(), &t, &labels);
                            s.spawn(move || self.decide(inst, i, seat, prompt, t, labels))
                        })
                        .collect();
                    handles.into_iter().map(|h| h.join().expect("decision thread")).collect()
                })
            } else {
                (0..2).map(|i| self.decide(inst, i, &seats[i], prompts[i].as_deref(), &t, &labels)).collect()
            };

            let failures: Vec<SeatFailure> = results.iter().filter_map(|r| r.choice.err()).collect();
            let choices: Vec<Option<StrategyId>> = results.iter().map(|r| r.choice.ok()).collect();
            for mut r in results {
                if !failures.is_empty() && r.choice.is_ok() {
                    r.record.status = DecisionStatus::Discarded;
                }
                if let Some(e) = &r.record.error {
                    error.get_or_insert_with(|| format!("round {} agent{}: {e}", r.record.round, r.record.agent));
                }
                decisions.push(r.record);
                requests.extend(r.requests);
            }
            if !failures.is_empty() {
                status = if failures.contains(&SeatFailure::Unavailable) {
                    RunStatus::ProviderError
                } else {
                    RunStatus::InvalidDecision
                };
                break;
            }
            t = t.apply_round(choices[0].expect("ok"), choices[1].expect("ok")).expect("not complete");
        }

        let (a, b) = total_payoffs(&t);
        InstanceOutcome {
            run: RunRecord {
                instance_id: inst.instance_id.clone(),
                model: inst.model.clone(),
                game: inst.game.clone(),
                language: inst.language.clone(),
                personalities: inst.personalities.clone(),
                rounds_known: inst.rounds_known,
                opponent_personality_known: inst.opponent_personality_known,
                repetition: inst.repetition,
                seed: inst.seed,
                status,
                rounds: t.rounds().to_vec(),
                totals: [a, b],
                error: if status == RunStatus::Complete { None } else { error },
            },
            decisions,
            requests,
        }
    }
}

fn unix_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

fn shard_paths(shards: &Path, inst: &GameInstance) -> (PathBuf, PathBuf) {
    (
        shards.join(format!("{}.jsonl", inst.instance_id)),
        shards.join(format!("{}.requests.jsonl", inst.instance_id)),
    )
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ResultsError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| ResultsError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| ResultsError::io(path, e))
}

fn to_lines<T: serde::Serialize>(items: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut buf = Vec::new();
    for it in items {
        serde_json::to_writer(&mut buf, &it).expect("serializable");
        buf.push(b'\n');
    }
    buf
}

fn write_shard(shards: &Path, inst: &GameInstance, outcome: &InstanceOutcome) -> Result<(), ResultsError> {
    let (results, requests) = shard_paths(shards, inst);
    write_atomic(&requests, &to_lines(&outcome.requests))?;
    let lines = outcome
        .decisions
        .iter()
        .cloned()
        .map(ResultLine::Decision)
        .chain(std::iter::once(ResultLine::Run(outcome.run.clone())));
    // the results shard is written last: its presence marks the instance done
    write_atomic(&results, &to_lines(lines))
}

/// Status of a finished shard, if one exists.
fn shard_status(shards: &Path, inst: &GameInstance) -> Option<RunStatus> {
    let (results, _) = shard_paths(shards, inst);
    if !results.exists() {
        return None;
    }
    match read_jsonl::<ResultLine>(&results).ok()?.pop()? {
        ResultLine::Run(r) => Some(r.status),
        _ => None,
    }
}

/// Runs every instance, writing `results.jsonl`, `requests.jsonl` and
/// `manifest.json` into `out_dir`. Complete shards left by an interrupted
/// run with the same config hash are reused. Instances that fail are
/// retried once after the main pass.
pub fn run_experiment(orch: &Orchestrator, out_dir: &Path, parallelism: usize) -> Result<ExperimentManifest, RunError> {
    let hash = orch.config_hash();
    if out_dir.join(MANIFEST_FILE).exists() {
        let old = ExperimentManifest::load(out_dir)?;
        if old.config_hash != hash {
            return Err(RunError::Stale { dir: out_dir.to_path_buf(), found: old.config_hash, expected: hash });
        }
    }
    let shards = out_dir.join("shards");
    fs::create_dir_all(&shards).map_err(|e| ResultsError::io(&shards, e))?;

    let instances = orch.instances()?;
    let started = unix_ms();
    let mut manifest = ExperimentManifest {
        experiment_id: orch.cfg.experiment_id.clone(),
        config_hash: hash,
        master_seed: orch.cfg.master_seed,
        mock: orch.mock,
        status: ManifestStatus::Running,
        instances_total: instances.len(),
        games_per_model: games_per_model(&instances),
        counts: BTreeMap::new(),
        rounds_completed: 0,
        decisions_applied: 0,
        decisions_invalid: 0,
        retried_instances: 0,
        started_unix_ms: started,
        finished_unix_ms: None,
        elapsed_ms: None,
        config: orch.cfg.clone(),
    };
    manifest.save(out_dir)?;

    let statuses: Mutex<Vec<Option<RunStatus>>> = Mutex::new(vec![None; instances.len()]);
    let first_error: Mutex<Option<ResultsError>> = Mutex::new(None);
    let execute = |indices: &[usize], force: bool| {
        let next = AtomicUsize::new(0);
        let workers = parallelism.max(1).min(indices.len().max(1));
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let k = next.fetch_add(1, Ordering::Relaxed);
                    let Some(&i) = indices.get(k) else { break };
                    let inst = &instances[i];
                    let status = match (force, shard_status(&shards, inst)) {
                        (false, Some(st)) if st == RunStatus::Complete => st,
                        _ => {
                            let outcome = orch.run_game_instance(inst);
                            if let Err(e) = write_shard(&shards, inst, &outcome) {
                                first_error.lock().unwrap().get_or_insert(e);
                            }
                            outcome.run.status
                        }
                    };
                    statuses.lock().unwrap()[i] = Some(status);
                });
            }
        });
    };

    let all: Vec<usize> = (0..instances.len()).collect();
    execute(&all, false);
    let failed: Vec<usize> = statuses
        .lock()
        .unwrap()
        .iter()
        .enumerate()
        .filter(|(_, s)| **s != Some(RunStatus::Complete))
        .map(|(i, _)| i)
        .collect();
    manifest.retried_instances = failed.len();
    if !failed.is_empty() {
        execute(&failed, true);
    }
    if let Some(e) = first_error.into_inner().unwrap() {
        return Err(e.into());
    }

    // merge in expansion order
    let results_path = out_dir.join(RESULTS_FILE);
    let requests_path = out_dir.join(REQUESTS_FILE);
    let mut results_out = fs::File::create(&results_path).map_err(|e| ResultsError::io(&results_path, e))?;
    let mut requests_out = fs::File::create(&requests_path).map_err(|e| ResultsError::io(&requests_path, e))?;
    for inst in &instances {
        let (r, q) = shard_paths(&shards, inst);
        let bytes = fs::read(&r).map_err(|e| ResultsError::io(&r, e))?;
        for line in read_jsonl::<ResultLine>(&r)? {
            match line {
                ResultLine::Run(run) => {
                    *manifest.counts.entry(run.status).or_default() += 1;
                    manifest.rounds_completed += run.rounds.len() as u64;
                }
                ResultLine::Decision(d) => match d.status {
                    DecisionStatus::Applied => manifest.decisions_applied += 1,
                    DecisionStatus::Invalid => manifest.decisions_invalid += 1,
                    DecisionStatus::Discarded => {}
                },
            }
        }
        results_out.write_all(&bytes).map_err(|e| ResultsError::io(&results_path, e))?;
        if q.exists() {
            let bytes = fs::read(&q).map_err(|e| ResultsError::io(&q, e))?;
            requests_out.write_all(&bytes).map_err(|e| ResultsError::io(&requests_path, e))?;
        }
    }
    drop(results_out);
    drop(requests_out);
    fs::remove_dir_all(&shards).map_err(|e| ResultsError::io(&shards, e))?;

    let finished = unix_ms();
    manifest.finished_unix_ms = Some(finished);
    manifest.elapsed_ms = Some(finished.saturating_sub(started));
    manifest.status = if manifest.failed() == 0 { ManifestStatus::Complete } else { ManifestStatus::Partial };
    manifest.save(out_dir)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::GameDef;

    fn cfg(languages: usize, reps: u32) -> ExperimentConfig {
        let langs = ["en", "fr", "ar", "vi", "zh"];
        let mut c: ExperimentConfig = serde_json::from_str(
            r#"{"experiment_id":"t","games":[],"languages":[],
                "personalities":[["cooperative","cooperative"],["cooperative","selfish"],["selfish","selfish"]],
                "rounds_known":[true,false],"opponent_personality_known":[false],
                "models":[{"id":"m","agent1":{"kind":"scripted","policy":{"kind":"tit_for_tat"}}}],
                "repetitions":1,"master_seed":5}"#,
        )
        .unwrap();
        c.games.push(GameDef::from(&GameSpec::prisoners_dilemma_example()));
        c.languages = langs[..languages].iter().map(|s| s.to_string()).collect();
        c.repetitions = reps;
        c
    }

    #[test]
    fn cross_product_cardinality() {
        let inst = expand_config(&cfg(5, 10)).unwrap();
        assert_eq!(inst.len(), 300);
        assert_eq!(games_per_model(&inst), 6);
    }

    #[test]
    fn one_shot_games_ignore_rounds_known() {
        let mut c = cfg(1, 1);
        c.games = vec![GameDef::from(&GameSpec::zero_sum_example())];
        let inst = expand_config(&c).unwrap();
        assert_eq!(inst.len(), 3);
        assert!(inst.iter().all(|i| i.rounds_known.is_none()));
    }

    #[test]
    fn empty_axis_is_config_error() {
        let c = cfg(0, 1);
        let err = expand_config(&c).unwrap_err();
        assert!(err.to_string().contains("`languages` is empty"));
    }

    #[test]
    fn ids_and_seeds_are_stable_and_distinct() {
        let a = expand_config(&cfg(2, 3)).unwrap();
        let b = expand_config(&cfg(2, 3)).unwrap();
        assert_eq!(a, b);
        let ids: BTreeSet<_> = a.iter().map(|i| &i.instance_id).collect();
        assert_eq!(ids.len(), a.len());
        let seeds: BTreeSet<_> = a.iter().map(|i| i.seed).collect();
        assert_eq!(seeds.len(), a.len());
        // an instance's id and seed do not depend on the other axes' extent
        let small = expand_config(&cfg(1, 1)).unwrap();
        assert!(a.iter().any(|i| *i == small[0]));
    }
}
