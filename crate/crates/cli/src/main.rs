use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use matrix_arena::config::{ConfigError, ExperimentConfig};
use matrix_arena::equilibrium;
use matrix_arena::game::{validate_game, GameSpec, StrategyId};
use matrix_arena::orchestrator::{expand_config, games_per_model, run_experiment, Orchestrator, RunError};
use matrix_arena::prompting::{load_language_pack, LanguagePack};
use matrix_arena::report::{analyze, write_metrics, write_report};
use matrix_arena::results::{LoadedResults, ManifestStatus, ResultsError, RunStatus};

const OK: u8 = 0;
const INVALID: u8 = 1;
const RUNTIME: u8 = 2;
const PARTIAL: u8 = 3;

#[derive(Parser)]
#[command(name = "arena", version, about = "Run and analyze 2x2 matrix-game tournaments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a configuration and its language pack
    Validate {
        config: PathBuf,
        #[arg(long)]
        pack: Option<PathBuf>,
    },
    /// Execute every game instance of a configuration
    Run {
        config: PathBuf,
        /// Output directory (default: results/<experiment_id>)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replace every provider with its offline mock
        #[arg(long)]
        mock: bool,
        /// Override the configured master seed
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        parallelism: Option<usize>,
        #[arg(long)]
        pack: Option<PathBuf>,
    },
    /// Print the equilibrium analysis of one configured game
    Solve { config: PathBuf, game_id: String },
    /// Compute metrics.json for a results directory
    Analyze { dir: PathBuf },
    /// Write boxplot, round-series and radar CSV tables
    Report {
        dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Validate { config, pack } => validate(&config, pack.as_deref()),
        Command::Run { config, out, mock, seed, parallelism, pack } => {
            run(&config, out, mock, seed, parallelism, pack.as_deref())
        }
        Command::Solve { config, game_id } => solve(&config, &game_id),
        Command::Analyze { dir } => analyze_cmd(&dir),
        Command::Report { dir, out } => report_cmd(&dir, out.as_deref().unwrap_or(&dir)),
    };
    ExitCode::from(code)
}

fn load_config(path: &Path) -> Result<ExperimentConfig, u8> {
    ExperimentConfig::load(path).map_err(|e| {
        eprintln!("error: {e}");
        INVALID
    })
}

fn load_pack(cfg: &ExperimentConfig, config_path: &Path, pack: Option<&Path>) -> Result<LanguagePack, Vec<String>> {
    let path = match pack.map(Path::to_path_buf).or_else(|| cfg.pack_path(config_path)) {
        Some(p) => p,
        None => return Err(vec!["no language pack: set `pack` in the config or pass --pack".into()]),
    };
    load_language_pack(&path).map_err(|e| e.problems.iter().map(|p| p.to_string()).collect())
}

fn validate(config_path: &Path, pack: Option<&Path>) -> u8 {
    let cfg = match load_config(config_path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let mut findings = cfg.validate();
    for g in &cfg.games {
        let report = validate_game(g);
        let kind = if report.zero_sum { "zero-sum" } else { "general-sum" };
        println!("game {}: {} checks, {kind}, {}", g.id, report.checks.len(), if report.is_valid() { "valid" } else { "INVALID" });
    }
    match load_pack(&cfg, config_path, pack) {
        Ok(p) => {
            for kind in p.game_kinds() {
                println!("language pack: {kind}: {}", p.languages(kind).join(", "));
            }
            findings.extend(cfg.check_pack(&p));
        }
        Err(problems) => findings.extend(problems),
    }
    if findings.is_empty() {
        if let Ok(instances) = expand_config(&cfg) {
            println!(
                "ok: {} instances, {} games per model, {} first-round decisions",
                instances.len(),
                games_per_model(&instances),
                2 * instances.len()
            );
        }
        OK
    } else {
        for f in &findings {
            println!("finding: {f}");
        }
        println!("{} finding(s)", findings.len());
        INVALID
    }
}

fn run(
    config_path: &Path,
    out: Option<PathBuf>,
    mock: bool,
    seed: Option<u64>,
    parallelism: Option<usize>,
    pack: Option<&Path>,
) -> u8 {
    let mut cfg = match load_config(config_path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    let pack = match load_pack(&cfg, config_path, pack) {
        Ok(p) => p,
        Err(problems) => {
            problems.iter().for_each(|p| eprintln!("error: {p}"));
            return INVALID;
        }
    };
    let out = out.unwrap_or_else(|| Path::new("results").join(&cfg.experiment_id));
    let workers = parallelism
        .or(cfg.parallelism)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    let orch = match Orchestrator::new(cfg, pack, mock) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return match e {
                RunError::Config(_) => INVALID,
                _ => RUNTIME,
            };
        }
    };
    match run_experiment(&orch, &out, workers) {
        Ok(m) => {
            println!("results: {}", out.display());
            println!("instances: {} ({} games per model)", m.instances_total, m.games_per_model);
            for status in [RunStatus::Complete, RunStatus::InvalidDecision, RunStatus::ProviderError] {
                println!("  {}: {}", status.as_str(), m.counts.get(&status).copied().unwrap_or(0));
            }
            println!("decisions applied: {}, invalid: {}", m.decisions_applied, m.decisions_invalid);
            if m.status == ManifestStatus::Complete {
                OK
            } else {
                PARTIAL
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                RunError::Config(ConfigError::Invalid(_)) | RunError::Stale { .. } => INVALID,
                _ => RUNTIME,
            }
        }
    }
}

fn solve(config_path: &Path, game_id: &str) -> u8 {
    let cfg = match load_config(config_path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let Some(def) = cfg.games.iter().find(|g| g.id == game_id) else {
        eprintln!("error: unknown game id {game_id:?}");
        return INVALID;
    };
    let spec: GameSpec = match def.build() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: game {game_id}: {e}");
            return INVALID;
        }
    };
    let r = equilibrium::analyze(&spec);
    let name = |s: StrategyId| spec.strategies[s.index()].as_str();
    println!("game {} ({:?})", r.game_id, r.objective);
    if r.pure_equilibria.is_empty() {
        println!("pure equilibria: none");
    }
    for p in &r.pure_equilibria {
        println!("pure equilibrium: ({}, {})", name(p.p1), name(p.p2));
    }
    match (&r.mixed_equilibrium, &r.mixed_note) {
        (Some(m), _) => println!(
            "mixed equilibrium: P({}) = {} for agent 1, {} for agent 2",
            name(StrategyId::First),
            m.p1_prob_strategy0,
            m.p2_prob_strategy0
        ),
        (None, Some(note)) => println!("mixed equilibrium: none ({note})"),
        (None, None) => println!("mixed equilibrium: none"),
    }
    let dom = |d: Option<StrategyId>| d.map(name).unwrap_or("none");
    println!("dominant strategies: agent 1 {}, agent 2 {}", dom(r.dominant_p1), dom(r.dominant_p2));
    if let Some(v) = r.zero_sum_value {
        println!("zero-sum value: {v}");
    }
    println!("prisoner's dilemma ordering: {}", if r.pd_ordering_ok { "yes" } else { "no" });
    println!("{}", serde_json::to_string(&r).expect("report serializes"));
    OK
}

fn load_results(dir: &Path) -> Result<LoadedResults, u8> {
    LoadedResults::load(dir).map_err(|e| {
        eprintln!("error: {e}");
        match e {
            ResultsError::Empty(_) | ResultsError::Parse { .. } | ResultsError::Io { .. } => INVALID,
        }
    })
}

fn analyze_cmd(dir: &Path) -> u8 {
    let loaded = match load_results(dir) {
        Ok(l) => l,
        Err(code) => return code,
    };
    match analyze(&loaded).and_then(|r| write_metrics(&r, dir).map(|p| (r, p))) {
        Ok((report, path)) => {
            for g in &report.games {
                for (name, s) in &g.metrics {
                    for (model, v) in &s.raw {
                        println!("{} {} {}: raw {v:.6}, normalized {:.6}", g.game, model, name.code(), s.normalized[model]);
                    }
                    for (model, e) in &s.errors {
                        println!("{} {} {}: {e}", g.game, model, name.code());
                    }
                }
            }
            println!("wrote {}", path.display());
            OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            RUNTIME
        }
    }
}

fn report_cmd(dir: &Path, out: &Path) -> u8 {
    let loaded = match load_results(dir) {
        Ok(l) => l,
        Err(code) => return code,
    };
    match write_report(&loaded, out) {
        Ok(paths) => {
            paths.iter().for_each(|p| println!("wrote {}", p.display()));
            OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            RUNTIME
        }
    }
}
