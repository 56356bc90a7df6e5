//! Memory ON/OFF ablation: run N dialogues per condition, then analyze and
//! export.
//!
//! Run directory layout:
//!
//! ```text
//! <run_dir>/summary.json
//! <run_dir>/<condition>/dialogue-<n>.json
//! <run_dir>/<condition>/failed/attempt-<a>.partial.json
//! <run_dir>/distributions.csv, transactions*, charts/   (see `export`)
//! ```

pub mod analysis;
pub mod chart;
pub mod export;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dialogue::{run_dialogue, DialogueError, Transcript, TranscriptError};
use crate::gateway::{Gateway, Telemetry, TelemetrySnapshot};
use crate::scenario::{Scenario, ScenarioError};
use crate::types::Condition;

pub use analysis::{
    analyze, analyze_distribution, classify_transactions, AnalysisError, AnalysisReport, EgoStateDistribution, StateCounts,
    TransactionAnnotation, TransactionKind, TransactionTally,
};
pub use export::{export_results, ExportError};

pub const DEFAULT_DIALOGUES_PER_CONDITION: usize = 22;
pub const DEFAULT_TURNS_PER_AGENT: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Export(#[from] ExportError),
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("thread pool: {0}")]
    Pool(String),
    #[error("no transcripts found under {0}")]
    NoTranscripts(String),
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub dialogues_per_condition: usize,
    pub turns_per_agent: usize,
    pub conditions: Vec<Condition>,
    pub base_seed: u64,
    pub parallelism: usize,
}

impl ExperimentConfig {
    /// Defaults: 22 dialogues of 4 turns per agent under both conditions.
    pub fn new(scenario: Scenario) -> Self {
        Self {
            scenario,
            dialogues_per_condition: DEFAULT_DIALOGUES_PER_CONDITION,
            turns_per_agent: DEFAULT_TURNS_PER_AGENT,
            conditions: Condition::ALL.to_vec(),
            base_seed: 0,
            parallelism: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.dialogues_per_condition == 0 {
            return Err(ExperimentError::InvalidConfig("dialogues_per_condition must be at least 1".into()));
        }
        if self.turns_per_agent == 0 {
            return Err(ExperimentError::InvalidConfig("turns_per_agent must be at least 1".into()));
        }
        if self.conditions.is_empty() {
            return Err(ExperimentError::InvalidConfig("at least one condition is required".into()));
        }
        if self.parallelism == 0 {
            return Err(ExperimentError::InvalidConfig("parallelism must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentResponses {
    pub agent: String,
    pub responses: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedAttempt {
    pub attempt: usize,
    pub seed: u64,
    pub turns_completed: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: Condition,
    pub dialogues_completed: usize,
    pub complete: bool,
    pub failed_attempts: Vec<FailedAttempt>,
    pub responses_per_agent: Vec<AgentResponses>,
    pub telemetry: TelemetrySnapshot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub scenario_id: String,
    pub base_seed: u64,
    pub dialogues_per_condition: usize,
    pub turns_per_agent: usize,
    /// False when some condition ran out of attempts before reaching its target.
    pub complete: bool,
    /// Embedding calls spent indexing banks before the memory_on runs.
    pub indexing_embed_calls: u64,
    pub conditions: Vec<ConditionSummary>,
    pub analysis: AnalysisReport,
}

impl AblationSummary {
    pub fn condition(&self, condition: Condition) -> Option<&ConditionSummary> {
        self.conditions.iter().find(|c| c.condition == condition)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug)]
pub struct AblationRun {
    pub summary: AblationSummary,
    /// Completed transcripts per condition, in attempt order.
    pub transcripts: Vec<(Condition, Vec<Transcript>)>,
    /// Aborted dialogues with their partial transcripts.
    pub failures: Vec<(Condition, usize, DialogueError)>,
}

impl AblationRun {
    pub fn transcripts_for(&self, condition: Condition) -> &[Transcript] {
        self.transcripts.iter().find(|(c, _)| *c == condition).map(|(_, t)| t.as_slice()).unwrap_or(&[])
    }
}

type Attempt = (usize, Result<Transcript, DialogueError>);

fn run_condition(
    scenario: &Scenario,
    condition: Condition,
    config: &ExperimentConfig,
    gateway: &Gateway,
    pool: &rayon::ThreadPool,
) -> (Vec<Transcript>, Vec<(usize, DialogueError)>) {
    let target = config.dialogues_per_condition;
    let max_attempts = 2 * target;
    let mut completed: Vec<(usize, Transcript)> = Vec::new();
    let mut failed: Vec<(usize, DialogueError)> = Vec::new();
    let mut next = 0;
    while completed.len() < target && next < max_attempts {
        let batch = (target - completed.len()).min(max_attempts - next);
        let attempts = next..next + batch;
        next += batch;
        let results: Vec<Attempt> = pool.install(|| {
            attempts
                .into_par_iter()
                .map(|a| (a, run_dialogue(scenario, condition, config.base_seed.wrapping_add(a as u64), gateway)))
                .collect()
        });
        for (a, r) in results {
            match r {
                Ok(t) => completed.push((a, t)),
                Err(e) => failed.push((a, e)),
            }
        }
    }
    completed.sort_by_key(|(a, _)| *a);
    (completed.into_iter().map(|(_, t)| t).collect(), failed)
}

/// Run the ablation. Dialogue `a` of a condition uses seed `base_seed + a`;
/// both conditions use the same seeds. Failed dialogues are retried with the
/// next seeds, up to twice the target count of attempts.
pub fn run_ablation(config: &ExperimentConfig, gateway: &Gateway) -> Result<AblationRun, ExperimentError> {
    config.validate()?;
    let mut scenario = config.scenario.clone().with_turns_per_agent(config.turns_per_agent);
    let mut conditions = config.conditions.clone();
    conditions.sort();
    conditions.dedup();

    let indexing = Telemetry::new();
    if conditions.contains(&Condition::MemoryOn) && !scenario.is_indexed() {
        scenario.index_banks(&gateway.rebind(indexing.clone()).session(0))?;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism.min(config.dialogues_per_condition))
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))?;

    let mut transcripts = Vec::new();
    let mut failures = Vec::new();
    let mut summaries = Vec::new();
    for condition in conditions {
        let telemetry = Telemetry::new();
        let gw = gateway.rebind(telemetry.clone());
        let (done, failed) = run_condition(&scenario, condition, config, &gw, &pool);
        let responses_per_agent = scenario
            .agent_names()
            .iter()
            .map(|name| AgentResponses {
                agent: name.to_string(),
                responses: done.iter().flat_map(|t| &t.turns).filter(|t| t.speaker == *name).count() as u64,
            })
            .collect();
        summaries.push(ConditionSummary {
            condition,
            dialogues_completed: done.len(),
            complete: done.len() == config.dialogues_per_condition,
            failed_attempts: failed
                .iter()
                .map(|(a, e)| FailedAttempt {
                    attempt: *a,
                    seed: e.partial.seed,
                    turns_completed: e.partial.turns.len(),
                    error: e.to_string(),
                })
                .collect(),
            responses_per_agent,
            telemetry: telemetry.snapshot(),
        });
        failures.extend(failed.into_iter().map(|(a, e)| (condition, a, e)));
        transcripts.push((condition, done));
    }

    let analysis = analyze(&transcripts)?;
    let summary = AblationSummary {
        scenario_id: scenario.scenario_id.clone(),
        base_seed: config.base_seed,
        dialogues_per_condition: config.dialogues_per_condition,
        turns_per_agent: config.turns_per_agent,
        complete: summaries.iter().all(|s| s.complete),
        indexing_embed_calls: indexing.snapshot().embed_calls,
        conditions: summaries,
        analysis,
    };
    Ok(AblationRun { summary, transcripts, failures })
}

pub fn dialogue_path(run_dir: &Path, condition: Condition, n: usize) -> PathBuf {
    run_dir.join(condition.as_str()).join(format!("dialogue-{n}.json"))
}

/// Persist transcripts, partial transcripts, summary, tables and charts.
pub fn write_run(run: &AblationRun, run_dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| ExperimentError::Io { path, source }
    };
    fs::create_dir_all(run_dir).map_err(io(run_dir))?;
    let mut written = Vec::new();
    for (condition, transcripts) in &run.transcripts {
        for (n, t) in transcripts.iter().enumerate() {
            let path = dialogue_path(run_dir, *condition, n);
            t.save(&path)?;
            written.push(path);
        }
    }
    for (condition, attempt, err) in &run.failures {
        let path = run_dir.join(condition.as_str()).join("failed").join(format!("attempt-{attempt}.partial.json"));
        err.partial.save(&path)?;
        written.push(path);
    }
    let path = run_dir.join("summary.json");
    fs::write(&path, run.summary.to_json()).map_err(io(&path))?;
    written.push(path);
    written.extend(export_results(&run.summary.analysis, run_dir)?);
    Ok(written)
}

/// A transcript file that could not be read, reported per file.
#[derive(Debug)]
pub struct BadTranscript {
    pub path: PathBuf,
    pub error: TranscriptError,
}

/// Transcripts grouped by condition, in condition order.
pub type ConditionGroups = Vec<(Condition, Vec<Transcript>)>;

/// Load `<dir>/<condition>/dialogue-<n>.json` files, ordered by `n`.
pub fn read_results_dir(dir: &Path) -> Result<(ConditionGroups, Vec<BadTranscript>), ExperimentError> {
    if !dir.is_dir() {
        return Err(ExperimentError::Io {
            path: dir.display().to_string(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        });
    }
    let mut groups = Vec::new();
    let mut bad = Vec::new();
    for condition in Condition::ALL {
        let cdir = dir.join(condition.as_str());
        if !cdir.is_dir() {
            continue;
        }
        let mut numbered: Vec<(usize, PathBuf)> = Vec::new();
        for entry in fs::read_dir(&cdir).map_err(|source| ExperimentError::Io { path: cdir.display().to_string(), source })? {
            let entry = entry.map_err(|source| ExperimentError::Io { path: cdir.display().to_string(), source })?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(n) = name.strip_prefix("dialogue-").and_then(|s| s.strip_suffix(".json")).and_then(|s| s.parse().ok()) {
                numbered.push((n, entry.path()));
            }
        }
        numbered.sort();
        let mut transcripts = Vec::new();
        for (_, path) in numbered {
            match Transcript::load(&path) {
                Ok(t) if t.condition == condition => transcripts.push(t),
                Ok(t) => bad.push(BadTranscript {
                    error: TranscriptError::Malformed {
                        path: path.display().to_string(),
                        message: format!("condition {} stored under {}", t.condition, condition),
                    },
                    path,
                }),
                Err(error) => bad.push(BadTranscript { path, error }),
            }
        }
        if !transcripts.is_empty() {
            groups.push((condition, transcripts));
        }
    }
    Ok((groups, bad))
}
