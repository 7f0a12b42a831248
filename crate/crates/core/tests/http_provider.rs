mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use common::{completion, dead_url, serve};
use matrix_arena::config::ExperimentConfig;
use matrix_arena::gateway::{
    Channel, ChatProvider, GatewayError, HttpProvider, ProviderConfig, ProviderRuntime, SystemClock, VirtualClock,
};
use matrix_arena::game::StrategyId;
use matrix_arena::orchestrator::{run_experiment, Orchestrator};
use matrix_arena::prompting::load_language_pack;
use matrix_arena::results::{LoadedResults, RunStatus};

fn provider_cfg(url: &str) -> ProviderConfig {
    ProviderConfig {
        endpoint_url: url.to_string(),
        model_id: "test-model".into(),
        temperature: 0.9,
        top_p: 0.6,
        top_k: Some(40),
        api_key_env: "ARENA_TEST_KEY".into(),
        backoff_ms: 1,
        timeout_ms: 5_000,
        ..ProviderConfig::offline("local")
    }
}

fn labels() -> [String; 2] {
    ["Option A".to_string(), "Option B".to_string()]
}

#[test]
fn wire_format_and_auth() {
    let server = serve(Arc::new(|_| (200, completion("Option B."))));
    let cfg = provider_cfg(&server.url);
    let channel = Channel::new(
        Arc::new(cfg.clone()),
        Arc::new(HttpProvider::with_key(cfg, "sk-secret".into())),
        Arc::new(ProviderRuntime::unlimited()),
    );
    let d = channel.request_decision("Choose now.", &labels(), None).unwrap();
    assert_eq!(d.chosen, StrategyId::Second);
    assert_eq!(d.attempts, 1);
    let seen = server.captured.lock().unwrap();
    assert_eq!(seen.len(), 1);
    let req = &seen[0];
    assert!(req.request_line.starts_with("POST /v1/chat/completions"));
    assert_eq!(req.header("authorization"), Some("Bearer sk-secret"));
    assert_eq!(
        req.body,
        serde_json::json!({
            "model": "test-model",
            "messages": [{"role": "user", "content": "Choose now."}],
            "temperature": 0.9,
            "top_p": 0.6,
            "top_k": 40
        })
    );
}

#[test]
fn server_errors_are_retried_with_the_same_prompt() {
    let calls = Arc::new(std::sync::atomic::AtomicUsize::new(0));
    let c = calls.clone();
    let server = serve(Arc::new(move |_| {
        if c.fetch_add(1, std::sync::atomic::Ordering::SeqCst) < 2 {
            (503, "{\"error\":\"busy\"}".into())
        } else {
            (200, completion("Option A"))
        }
    }));
    let cfg = provider_cfg(&server.url);
    let runtime = ProviderRuntime::new(&cfg, Arc::new(VirtualClock::default()));
    let channel =
        Channel::new(Arc::new(cfg.clone()), Arc::new(HttpProvider::with_key(cfg, "k".into())), Arc::new(runtime));
    let d = channel.request_decision("same prompt", &labels(), None).unwrap();
    assert_eq!((d.chosen, d.attempts), (StrategyId::First, 3));
    assert!(d.log[0].error.as_deref().unwrap().contains("HTTP 503"));
    let seen = server.captured.lock().unwrap();
    assert!(seen.iter().all(|r| r.prompt() == "same prompt"));
}

#[test]
fn unreachable_endpoint_is_provider_unavailable_and_key_is_redacted() {
    let mut cfg = provider_cfg(&dead_url());
    cfg.max_retries = 1;
    let p = HttpProvider::with_key(cfg.clone(), "sk-very-secret".into());
    assert!(p.complete("x", None, &labels()).is_err());
    let channel = Channel::new(Arc::new(cfg), Arc::new(p), Arc::new(ProviderRuntime::unlimited()));
    match channel.request_decision("x", &labels(), None) {
        Err(GatewayError::ProviderUnavailable { log, last_error }) => {
            assert_eq!(log.len(), 2);
            assert!(!last_error.contains("sk-very-secret"));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn missing_key_is_a_config_error() {
    let mut cfg = provider_cfg("http://127.0.0.1:9/");
    cfg.api_key_env = "ARENA_DEFINITELY_UNSET_KEY".into();
    let err = HttpProvider::from_env(cfg).err().unwrap();
    assert!(err.to_string().contains("ARENA_DEFINITELY_UNSET_KEY"));
}

fn pd_config(providers: Vec<ProviderConfig>, models: serde_json::Value) -> ExperimentConfig {
    serde_json::from_value(serde_json::json!({
        "experiment_id": "http",
        "games": [{"id":"pd","kind":"prisoners_dilemma","strategies":["Option A","Option B"],
                   "matrix":[[[6,6],[0,10]],[[10,0],[2,2]]],"n_rounds":3,"objective":"maximize",
                   "weights":[6,0,10,2]}],
        "languages": ["en"],
        "personalities": [["cooperative","selfish"]],
        "rounds_known": [true],
        "opponent_personality_known": [false],
        "models": models,
        "providers": providers,
        "repetitions": 1,
        "master_seed": 3
    }))
    .unwrap()
}

fn pack() -> matrix_arena::prompting::LanguagePack {
    load_language_pack(concat!(env!("CARGO_MANIFEST_DIR"), "/../../assets/packs/default")).unwrap()
}

#[test]
fn live_run_through_local_server_keeps_rounds_simultaneous() {
    let server = serve(Arc::new(|req| {
        // cooperate until the prompt's history shows a defection
        let p = req.prompt();
        let reply = if p.contains("chose Option B") { "Option B" } else { "Option A" };
        (200, completion(reply))
    }));
    let pc = provider_cfg(&server.url);
    let cfg = pd_config(
        vec![pc.clone()],
        serde_json::json!([{"id":"m","agent1":{"kind":"provider","provider":"local"},
                            "agent2":{"kind":"scripted","policy":{"kind":"always_second"}}}]),
    );
    let mut providers: BTreeMap<String, Arc<dyn ChatProvider>> = BTreeMap::new();
    providers.insert("local".into(), Arc::new(HttpProvider::with_key(pc, "k".into())));
    let orch = Orchestrator::with_providers(cfg, pack(), providers, false, Arc::new(SystemClock::default())).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let m = run_experiment(&orch, dir.path(), 2).unwrap();
    assert_eq!(m.counts[&RunStatus::Complete], 1);
    let loaded = LoadedResults::load(dir.path()).unwrap();
    let run = &loaded.runs[0];
    let p1: Vec<_> = run.rounds.iter().map(|r| r.choice_p1).collect();
    assert_eq!(p1, [StrategyId::First, StrategyId::Second, StrategyId::Second]);

    let seen = server.captured.lock().unwrap();
    assert_eq!(seen.len(), 3);
    // the round-k prompt lists exactly k-1 past rounds
    for req in seen.iter() {
        let p = req.prompt();
        let round: usize = p.split("The current round is number ").nth(1).unwrap()[..1].parse().unwrap();
        assert_eq!(p.matches("Round ").count(), round - 1, "{p}");
        assert!(!p.contains(&format!("Round {round}:")));
        assert!(p.contains("There are 3 rounds to decide."));
    }
    let requests = std::fs::read_to_string(dir.path().join("requests.jsonl")).unwrap();
    assert_eq!(requests.lines().count(), 3);
    assert!(!requests.contains("Bearer"));
}

#[test]
fn unreachable_provider_marks_instances_failed() {
    let mut pc = provider_cfg(&dead_url());
    pc.max_retries = 0;
    let cfg = pd_config(
        vec![pc.clone()],
        serde_json::json!([{"id":"m","agent1":{"kind":"provider","provider":"local"}}]),
    );
    let mut providers: BTreeMap<String, Arc<dyn ChatProvider>> = BTreeMap::new();
    providers.insert("local".into(), Arc::new(HttpProvider::with_key(pc, "k".into())));
    let orch = Orchestrator::with_providers(cfg, pack(), providers, false, Arc::new(SystemClock::default())).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let m = run_experiment(&orch, dir.path(), 1).unwrap();
    assert_eq!(m.counts[&RunStatus::ProviderError], 1);
    assert_eq!(m.retried_instances, 1);
    assert_eq!(m.status, matrix_arena::results::ManifestStatus::Partial);
    let loaded = LoadedResults::load(dir.path()).unwrap();
    assert!(loaded.runs[0].rounds.is_empty());
    assert!(loaded.runs[0].error.as_deref().unwrap().contains("provider unavailable"));
}
