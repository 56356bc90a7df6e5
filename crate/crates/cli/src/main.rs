//! `tasim`: validate scenarios, run dialogues and ablations, analyze and
//! replay stored runs.
//!
//! Exit codes: 0 ok, 1 validation/analysis failure, 2 usage/config,
//! 3 runtime/backend.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use tasim_core::experiment::{self, analysis::AnalysisReport, ExperimentConfig};
use tasim_core::{
    load_scenario, run_dialogue, validate_scenario, BackendConfig, Condition, EgoState, Gateway, Scenario, Telemetry,
    Transcript,
};

// Writes a stdout line; a closed pipe (e.g. `| head`) ends the process quietly.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write;
        if let Err(e) = writeln!(std::io::stdout(), $($arg)*) {
            if e.kind() == std::io::ErrorKind::BrokenPipe {
                std::process::exit(0);
            }
        }
    }};
}

const EXIT_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "tasim", version, about = "Ego-state persona dialogue simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario and its memory banks, reporting every problem.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run one dialogue and write its transcript.
    Run(RunArgs),
    /// Run the memory ON/OFF ablation, then analyze and export.
    Ablate(AblateArgs),
    /// Re-derive tables and charts from stored transcripts.
    Analyze {
        results_dir: PathBuf,
        /// Where to write tables and charts (defaults to the results dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a stored transcript turn by turn.
    Replay {
        transcript: PathBuf,
        /// Also print every candidate.
        #[arg(long)]
        candidates: bool,
    },
}

#[derive(Args)]
struct BackendArgs {
    /// `scripted`, or a path to a backend TOML file.
    #[arg(long, default_value = "scripted")]
    backend: String,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "memory_on")]
    condition: Condition,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Run directory name under --out (default: run-<scenario>-s<seed>).
    #[arg(long)]
    run_id: Option<String>,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = experiment::DEFAULT_DIALOGUES_PER_CONDITION)]
    dialogues: usize,
    #[arg(long, default_value_t = experiment::DEFAULT_TURNS_PER_AGENT)]
    turns: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Run directory name under --out (default: <scenario>-s<seed>).
    #[arg(long)]
    run_id: Option<String>,
    /// Concurrent dialogues (default: number of processors).
    #[arg(long)]
    parallel: Option<usize>,
    /// Comma-separated subset of memory_on,memory_off.
    #[arg(long, value_delimiter = ',', default_value = "memory_on,memory_off")]
    conditions: Vec<Condition>,
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Self { code, error: error.into() }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { config } => cmd_validate(&config),
        Command::Run(args) => cmd_run(&args),
        Command::Ablate(args) => cmd_ablate(&args),
        Command::Analyze { results_dir, out } => cmd_analyze(&results_dir, out.as_deref()),
        Command::Replay { transcript, candidates } => cmd_replay(&transcript, candidates),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn load_backend(spec: &str) -> Result<BackendConfig, Failure> {
    if spec == "scripted" {
        return Ok(BackendConfig::scripted_seeded(0));
    }
    let text = std::fs::read_to_string(spec).with_context(|| format!("reading backend config {spec}")).map_err(|e| Failure::new(EXIT_CONFIG, e))?;
    BackendConfig::from_toml_str(&text).with_context(|| format!("backend config {spec}")).map_err(|e| Failure::new(EXIT_CONFIG, e))
}

fn scenario_or_exit(path: &Path) -> Result<Scenario, Failure> {
    load_scenario(path).map_err(|e| Failure::new(EXIT_CONFIG, e))
}

fn cmd_validate(config: &Path) -> CmdResult {
    let violations = validate_scenario(config).map_err(|e| Failure::new(EXIT_CONFIG, e))?;
    if violations.is_empty() {
        out!("{}: ok", config.display());
        return Ok(());
    }
    for v in &violations {
        out!("{}: {v}", config.display());
    }
    Err(Failure::new(EXIT_FAILED, anyhow::anyhow!("{} violation(s)", violations.len())))
}

fn tag_line(t: &tasim_core::Turn) -> String {
    let fallback = if t.fallback_used { " (fallback)" } else { "" };
    format!("[{}] {} ({}\u{2192}{}){}: {}", t.index, t.speaker, t.selected_state.tag(), t.addressed_state.tag(), fallback, t.text)
}

fn cmd_run(args: &RunArgs) -> CmdResult {
    let backend = load_backend(&args.backend.backend)?;
    let mut scenario = scenario_or_exit(&args.config)?;
    let telemetry = Telemetry::new();
    let gateway = Gateway::with_telemetry(backend, telemetry.clone()).map_err(|e| Failure::new(EXIT_CONFIG, e))?;
    if args.condition.memory_enabled() {
        let indexer = gateway.rebind(Telemetry::new());
        scenario.index_banks(&indexer.session(0)).map_err(|e| Failure::new(EXIT_RUNTIME, e))?;
    }
    let run_id = args.run_id.clone().unwrap_or_else(|| format!("run-{}-s{}", scenario.scenario_id, args.seed));
    let run_dir = args.out.join(run_id);
    let transcript = match run_dialogue(&scenario, args.condition, args.seed, &gateway) {
        Ok(t) => t,
        Err(e) => {
            let path = run_dir.join(args.condition.as_str()).join("failed").join("dialogue-0.partial.json");
            let _ = e.partial.save(&path);
            return Err(Failure::new(EXIT_RUNTIME, e));
        }
    };
    out!("{} / {} / seed {}", scenario.scenario_id, args.condition, args.seed);
    for t in &transcript.turns {
        out!("{}", tag_line(t));
    }
    let path = experiment::dialogue_path(&run_dir, args.condition, 0);
    transcript.save(&path).map_err(|e| Failure::new(EXIT_RUNTIME, e))?;
    let snap = telemetry.snapshot();
    out!("chat calls: {}, embed calls: {}, retrievals: {}", snap.chat_calls, snap.embed_calls, snap.retrievals);
    out!("transcript: {}", path.display());
    Ok(())
}

fn print_distributions(report: &AnalysisReport) {
    out!("{:<12} {:<11} {:>6} {:>6} {:>6} {:>6} {:>9}", "agent", "condition", "P", "A", "C", "total", "fallbacks");
    for d in &report.distributions {
        out!(
            "{:<12} {:<11} {:>6} {:>6} {:>6} {:>6} {:>9}",
            d.agent_name,
            d.condition.map(|c| c.to_string()).unwrap_or_default(),
            d.counts.get(EgoState::Parent),
            d.counts.get(EgoState::Adult),
            d.counts.get(EgoState::Child),
            d.total,
            d.fallbacks
        );
    }
}

fn cmd_ablate(args: &AblateArgs) -> CmdResult {
    let backend = load_backend(&args.backend.backend)?;
    let scenario = scenario_or_exit(&args.config)?;
    let gateway = Gateway::new(backend).map_err(|e| Failure::new(EXIT_CONFIG, e))?;
    let run_id = args.run_id.clone().unwrap_or_else(|| format!("{}-s{}", scenario.scenario_id, args.seed));
    let run_dir = args.out.join(run_id);
    std::fs::create_dir_all(&run_dir)
        .with_context(|| format!("creating {}", run_dir.display()))
        .map_err(|e| Failure::new(EXIT_RUNTIME, e))?;

    let mut config = ExperimentConfig::new(scenario);
    config.dialogues_per_condition = args.dialogues;
    config.turns_per_agent = args.turns;
    config.base_seed = args.seed;
    config.conditions = args.conditions.clone();
    if let Some(p) = args.parallel {
        config.parallelism = p;
    }
    if let Err(e) = config.validate() {
        return Err(Failure::new(EXIT_CONFIG, e));
    }
    let run = experiment::run_ablation(&config, &gateway).map_err(|e| Failure::new(EXIT_RUNTIME, e))?;
    let written = experiment::write_run(&run, &run_dir).map_err(|e| Failure::new(EXIT_RUNTIME, e))?;

    for c in &run.summary.conditions {
        let responses: Vec<String> = c.responses_per_agent.iter().map(|r| format!("{}={}", r.agent, r.responses)).collect();
        out!(
            "{}: {} dialogues, responses per agent: {}; chat calls {}, embed calls {}, retrievals {}",
            c.condition,
            c.dialogues_completed,
            responses.join(", "),
            c.telemetry.chat_calls,
            c.telemetry.embed_calls,
            c.telemetry.retrievals
        );
    }
    print_distributions(&run.summary.analysis);
    out!("wrote {} files under {}", written.len(), run_dir.display());
    if !run.summary.complete {
        return Err(Failure::new(EXIT_RUNTIME, anyhow::anyhow!("some conditions did not reach the target dialogue count; see summary.json")));
    }
    Ok(())
}

fn cmd_analyze(dir: &Path, out: Option<&Path>) -> CmdResult {
    let (groups, bad) = experiment::read_results_dir(dir).map_err(|e| Failure::new(EXIT_FAILED, e))?;
    for b in &bad {
        eprintln!("{}: {}", b.path.display(), b.error);
    }
    let count: usize = groups.iter().map(|(_, t)| t.len()).sum();
    if count == 0 {
        return Err(Failure::new(EXIT_FAILED, anyhow::anyhow!("found 0 transcripts under {}", dir.display())));
    }
    let report = experiment::analyze(&groups).map_err(|e| Failure::new(EXIT_FAILED, e))?;
    let out = out.unwrap_or(dir);
    let written = experiment::export_results(&report, out).map_err(|e| Failure::new(EXIT_RUNTIME, e))?;
    print_distributions(&report);
    out!("analyzed {count} transcripts, wrote {} files under {}", written.len(), out.display());
    if !bad.is_empty() {
        return Err(Failure::new(EXIT_FAILED, anyhow::anyhow!("{} transcript file(s) could not be read", bad.len())));
    }
    Ok(())
}

fn cmd_replay(path: &Path, candidates: bool) -> CmdResult {
    let t = Transcript::load(path).map_err(|e| Failure::new(EXIT_FAILED, e))?;
    out!("{} / {} / seed {}", t.scenario_id, t.condition, t.seed);
    for turn in &t.turns {
        out!("{}", tag_line(turn));
        if candidates {
            for c in &turn.candidates {
                let memory = c.retrieved.first().map(|r| format!(" [memory {} {:.3}]", r.item.id, r.score)).unwrap_or_default();
                out!("    {}: {}{}", c.source_state.tag(), c.text, memory);
            }
        }
    }
    Ok(())
}
