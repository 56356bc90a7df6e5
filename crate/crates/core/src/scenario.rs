//! Scenario documents: two personas, their prompts and memory banks, and the
//! dialogue parameters.
//!
//! A scenario is a TOML file. Bank paths are resolved relative to the
//! scenario file; every ego state must either name a bank file or say
//! `memory_bank = "none"`.
//!
//! ```toml
//! scenario_id = "monday-q3-report"
//! situation = "..."
//! opener = "Taylor"
//! opening_line = "..."
//! retrieval_k = 1
//! turns_per_agent = 4
//!
//! [[agents]]
//! name = "Taylor"
//! life_script_name = "Must Be In Control and Perfect"
//! life_script = "..."
//! [agents.parent]
//! prompt = "..."
//! memory_bank = "banks/taylor_parent.json"
//! ```

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::agent::{AgentProfile, DecisionOptions, EgoStates, LifeScript};
use crate::ego_state::EgoStateProfile;
use crate::gateway::{Embedder, Sampling};
use crate::memory::{duplicate_ids, parse_bank_document, MemoryBank, MemoryError};
use crate::types::EgoState;

pub const NO_BANK: &str = "none";
pub const DEFAULT_RETRIEVAL_K: usize = 1;
pub const DEFAULT_TURNS_PER_AGENT: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Unreadable { path: String, source: std::io::Error },
    #[error("scenario has {} violation(s):\n{}", .0.len(), .0.iter().map(|v| format!("  - {v}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Violation>),
    #[error("indexing {agent}/{state} bank: {source}")]
    Indexing { agent: String, state: EgoState, source: MemoryError },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    scenario_id: Option<String>,
    situation: Option<String>,
    opener: Option<String>,
    opening_line: Option<String>,
    retrieval_k: Option<i64>,
    turns_per_agent: Option<i64>,
    min_score: Option<f64>,
    #[serde(default)]
    sampling: Option<Sampling>,
    #[serde(default)]
    decision: Option<DecisionOptions>,
    #[serde(default)]
    agents: Vec<AgentFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentFile {
    name: Option<String>,
    life_script_name: Option<String>,
    life_script: Option<String>,
    parent: Option<EgoStateFile>,
    adult: Option<EgoStateFile>,
    child: Option<EgoStateFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EgoStateFile {
    prompt: Option<String>,
    memory_bank: Option<String>,
}

/// A validated scenario with memory banks attached (not yet indexed).
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub scenario_id: String,
    pub situation: String,
    pub agents: [AgentProfile; 2],
    /// Index into `agents` of the agent speaking first.
    pub opener: usize,
    pub opening_line: String,
    pub retrieval_k: usize,
    pub turns_per_agent: usize,
    pub min_score: Option<f64>,
    pub sampling: Sampling,
    pub decision: DecisionOptions,
    /// Resolved bank file per (agent, state); `None` for memory-less states.
    pub bank_paths: Vec<(String, EgoState, Option<PathBuf>)>,
}

impl Scenario {
    pub fn agent(&self, name: &str) -> Option<&AgentProfile> {
        self.agents.iter().find(|a| a.agent_name == name)
    }

    pub fn agent_names(&self) -> [&str; 2] {
        [self.agents[0].agent_name.as_str(), self.agents[1].agent_name.as_str()]
    }

    pub fn with_turns_per_agent(mut self, turns: usize) -> Self {
        self.turns_per_agent = turns;
        self
    }

    pub fn has_memory(&self) -> bool {
        self.agents.iter().flat_map(|a| a.ego_states.iter()).any(|p| p.memory_bank.is_some())
    }

    pub fn is_indexed(&self) -> bool {
        self.agents
            .iter()
            .flat_map(|a| a.ego_states.iter())
            .filter_map(|p| p.memory_bank.as_ref())
            .all(MemoryBank::is_indexed)
    }

    /// Embed every bank's contexts.
    pub fn index_banks(&mut self, embed: &dyn Embedder) -> Result<(), ScenarioError> {
        for agent in &mut self.agents {
            for state in EgoState::ALL {
                if let Some(bank) = agent.ego_states.get_mut(state).memory_bank.as_mut() {
                    bank.build_index(embed).map_err(|source| ScenarioError::Indexing {
                        agent: agent.agent_name.clone(),
                        state,
                        source,
                    })?;
                }
            }
        }
        Ok(())
    }
}

struct Checker {
    violations: Vec<Violation>,
}

impl Checker {
    fn push(&mut self, location: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation { location: location.into(), message: message.into() });
    }

    fn text(&mut self, location: &str, value: Option<String>) -> String {
        match value {
            Some(v) if !v.trim().is_empty() => v,
            Some(_) => {
                self.push(location, "must not be empty");
                String::new()
            }
            None => {
                self.push(location, "missing");
                String::new()
            }
        }
    }

    fn positive(&mut self, location: &str, value: Option<i64>, default: usize) -> usize {
        match value {
            None => default,
            Some(v) if v >= 1 => v as usize,
            Some(v) => {
                self.push(location, format!("must be a positive integer, got {v}"));
                default
            }
        }
    }
}

fn check_bank(checker: &mut Checker, location: &str, path: &Path, state: EgoState) -> Option<MemoryBank> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            checker.push(location, format!("cannot read bank {}: {e}", path.display()));
            return None;
        }
    };
    let (bank_state, items) = match parse_bank_document(&text) {
        Ok(parsed) => parsed,
        Err(e) => {
            checker.push(location, format!("{}: {e}", path.display()));
            return None;
        }
    };
    let mut ok = true;
    if bank_state != state {
        checker.push(location, format!("{} holds a {bank_state} bank, expected {state}", path.display()));
        ok = false;
    }
    for (id, first, second) in duplicate_ids(&items) {
        checker.push(location, format!("{}: duplicate id {id:?} at items {first} and {second}", path.display()));
        ok = false;
    }
    for (ordinal, item) in items.iter().enumerate() {
        if item.id.trim().is_empty() {
            checker.push(location, format!("{}: item {ordinal}: field `id` is empty", path.display()));
            ok = false;
        }
        if item.context.trim().is_empty() {
            checker.push(location, format!("{}: item {ordinal}: field `context` is empty", path.display()));
            ok = false;
        }
    }
    if !ok {
        return None;
    }
    MemoryBank::from_items(state, items).ok()
}

fn resolve(base: &Path, raw: &str) -> PathBuf {
    let p = Path::new(raw);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Parse and check a scenario document, collecting every violation.
/// `base_dir` anchors relative bank paths.
pub fn parse_scenario(text: &str, base_dir: &Path) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = toml::from_str(text)
        .map_err(|e| ScenarioError::Invalid(vec![Violation { location: "document".into(), message: e.to_string() }]))?;
    let mut ck = Checker { violations: Vec::new() };

    let scenario_id = ck.text("scenario_id", file.scenario_id);
    let situation = ck.text("situation", file.situation);
    let opening_line = ck.text("opening_line", file.opening_line);
    let opener_name = ck.text("opener", file.opener);
    let retrieval_k = ck.positive("retrieval_k", file.retrieval_k, DEFAULT_RETRIEVAL_K);
    let turns_per_agent = ck.positive("turns_per_agent", file.turns_per_agent, DEFAULT_TURNS_PER_AGENT);
    if let Some(min) = file.min_score {
        if !(-1.0..=1.0).contains(&min) {
            ck.push("min_score", format!("must lie in [-1, 1], got {min}"));
        }
    }
    let sampling = file.sampling.unwrap_or_default();
    if let Err(e) = sampling.validate() {
        ck.push("sampling", e);
    }

    if file.agents.len() != 2 {
        ck.push("agents", format!("exactly two agents required, found {}", file.agents.len()));
    }
    let mut agents = Vec::new();
    let mut bank_paths = Vec::new();
    let mut seen_names: HashMap<String, usize> = HashMap::new();
    for (ai, agent) in file.agents.into_iter().enumerate() {
        let loc = format!("agents[{ai}]");
        let name = ck.text(&format!("{loc}.name"), agent.name);
        if !name.is_empty() {
            if let Some(prev) = seen_names.insert(name.to_lowercase(), ai) {
                ck.push(format!("{loc}.name"), format!("duplicates the name of agents[{prev}]"));
            }
        }
        let script_name = ck.text(&format!("{loc}.life_script_name"), agent.life_script_name);
        let script_text = ck.text(&format!("{loc}.life_script"), agent.life_script);
        let mut profiles = Vec::new();
        for (state, ego_file) in [(EgoState::Parent, agent.parent), (EgoState::Adult, agent.adult), (EgoState::Child, agent.child)] {
            let sloc = format!("{loc}.{state}");
            let Some(ego_file) = ego_file else {
                ck.push(&sloc, "missing ego state table");
                profiles.push(EgoStateProfile::new(state, String::new()));
                continue;
            };
            let prompt = ck.text(&format!("{sloc}.prompt"), ego_file.prompt);
            let mut profile = EgoStateProfile::new(state, prompt).with_k(retrieval_k);
            profile.min_score = file.min_score;
            match ego_file.memory_bank.as_deref().map(str::trim) {
                None => ck.push(format!("{sloc}.memory_bank"), format!("missing; give a bank path or \"{NO_BANK}\"")),
                Some("") => ck.push(format!("{sloc}.memory_bank"), format!("must not be empty; give a bank path or \"{NO_BANK}\"")),
                Some(NO_BANK) => bank_paths.push((name.clone(), state, None)),
                Some(raw) => {
                    let path = resolve(base_dir, raw);
                    profile.memory_bank = check_bank(&mut ck, &format!("{sloc}.memory_bank"), &path, state);
                    bank_paths.push((name.clone(), state, Some(path)));
                }
            }
            profiles.push(profile);
        }
        let [parent, adult, child]: [EgoStateProfile; 3] = profiles.try_into().expect("three states");
        agents.push(AgentProfile {
            agent_name: name,
            life_script: LifeScript { name: script_name, script_text },
            ego_states: EgoStates { parent, adult, child },
        });
    }

    let opener = agents.iter().position(|a| a.agent_name == opener_name);
    if opener.is_none() && !opener_name.is_empty() {
        ck.push("opener", format!("{opener_name:?} is not one of the scenario's agents"));
    }

    if !ck.violations.is_empty() {
        return Err(ScenarioError::Invalid(ck.violations));
    }
    let agents: [AgentProfile; 2] = agents.try_into().expect("two agents checked above");
    Ok(Scenario {
        scenario_id,
        situation,
        agents,
        opener: opener.expect("opener checked above"),
        opening_line,
        retrieval_k,
        turns_per_agent,
        min_score: file.min_score,
        sampling,
        decision: file.decision.unwrap_or_default(),
        bank_paths,
    })
}

/// Load a scenario file and its banks (unindexed).
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Unreadable { path: path.display().to_string(), source })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_scenario(&text, base)
}

/// All violations in a scenario file; empty when clean.
pub fn validate_scenario(path: &Path) -> Result<Vec<Violation>, ScenarioError> {
    match load_scenario(path) {
        Ok(_) => Ok(Vec::new()),
        Err(ScenarioError::Invalid(v)) => Ok(v),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BANK: &str = r#"{"ego_state":"parent","items":[{"id":"p1","context":"c","reaction":"r","emotions":["e"],"tone":"t"}]}"#;

    fn scenario_text(opener: &str, bank: &str) -> String {
        let state = |s: &str, b: &str| format!("[agents.{s}]\nprompt = \"{s} prompt\"\nmemory_bank = \"{b}\"\n");
        let agent = |n: &str| {
            format!(
                "[[agents]]\nname = \"{n}\"\nlife_script_name = \"script\"\nlife_script = \"text\"\n{}{}{}",
                state("parent", bank),
                state("adult", "none"),
                state("child", "none")
            )
        };
        format!(
            "scenario_id = \"s\"\nsituation = \"meeting\"\nopener = \"{opener}\"\nopening_line = \"go\"\n{}{}",
            agent("Taylor"),
            agent("John")
        )
    }

    fn write_bank(dir: &Path, body: &str) {
        fs::write(dir.join("p.json"), body).unwrap();
    }

    #[test]
    fn valid_scenario_loads() {
        let dir = tempfile::tempdir().unwrap();
        write_bank(dir.path(), BANK);
        let s = parse_scenario(&scenario_text("Taylor", "p.json"), dir.path()).unwrap();
        assert_eq!(s.opener, 0);
        assert_eq!(s.turns_per_agent, DEFAULT_TURNS_PER_AGENT);
        assert_eq!(s.retrieval_k, 1);
        assert!(s.agents[1].ego_states.parent.memory_bank.is_some());
        assert!(s.agents[1].ego_states.adult.memory_bank.is_none());
        assert!(!s.is_indexed());
    }

    #[test]
    fn unknown_opener_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        write_bank(dir.path(), BANK);
        let Err(ScenarioError::Invalid(v)) = parse_scenario(&scenario_text("nobody", "p.json"), dir.path()) else {
            panic!("expected violations");
        };
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].location, "opener");
        assert!(v[0].message.contains("nobody"));
    }

    #[test]
    fn all_violations_are_collected() {
        let dir = tempfile::tempdir().unwrap();
        write_bank(
            dir.path(),
            r#"{"ego_state":"parent","items":[
                {"id":"p1","context":"c","reaction":"r","emotions":[],"tone":"t"},
                {"id":"p1","context":"d","reaction":"r","emotions":[],"tone":"t"}]}"#,
        );
        let text = scenario_text("nobody", "p.json").replacen("opening_line = \"go\"\n", "opening_line = \"go\"\nturns_per_agent = 0\n", 1);
        let Err(ScenarioError::Invalid(v)) = parse_scenario(&text, dir.path()) else { panic!() };
        let joined: Vec<String> = v.iter().map(ToString::to_string).collect();
        assert!(joined.iter().any(|m| m.starts_with("opener")), "{joined:?}");
        assert!(joined.iter().any(|m| m.starts_with("turns_per_agent")), "{joined:?}");
        // both agents share the bank, so the duplicate shows up twice, naming both ordinals
        assert_eq!(joined.iter().filter(|m| m.contains("duplicate id \"p1\" at items 0 and 1")).count(), 2, "{joined:?}");
    }

    #[test]
    fn missing_bank_key_and_wrong_state() {
        let dir = tempfile::tempdir().unwrap();
        write_bank(dir.path(), &BANK.replace("parent", "child"));
        let text = scenario_text("Taylor", "p.json").replacen("memory_bank = \"none\"\n", "", 1);
        let Err(ScenarioError::Invalid(v)) = parse_scenario(&text, dir.path()) else { panic!() };
        assert!(v.iter().any(|x| x.location == "agents[0].adult.memory_bank" && x.message.contains("missing")));
        assert!(v.iter().any(|x| x.message.contains("holds a child bank, expected parent")));
    }

    #[test]
    fn unreadable_file() {
        assert!(matches!(load_scenario(Path::new("/definitely/not/here.toml")), Err(ScenarioError::Unreadable { .. })));
    }

    #[test]
    fn index_banks_indexes_everything() {
        let dir = tempfile::tempdir().unwrap();
        write_bank(dir.path(), BANK);
        let mut s = parse_scenario(&scenario_text("John", "p.json"), dir.path()).unwrap();
        assert_eq!(s.opener, 1);
        let embed = |t: &str| crate::gateway::scripted::hash_bag_embedding(t, 16);
        s.index_banks(&embed).unwrap();
        assert!(s.is_indexed());
    }
}
