//! Two-agent dialogue loop and the transcript record it produces.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{decide, DecideError};
use crate::ego_state::{generate_candidate, CandidateResponse, EgoStateError};
use crate::gateway::Gateway;
use crate::scenario::Scenario;
use crate::types::{Condition, EgoState};

/// Turns of history shown verbatim to every sub-agent.
pub const CONTEXT_WINDOW_TURNS: usize = 8;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConversationContext {
    pub situation: String,
    /// Shown only while the history is empty.
    pub opening_cue: Option<String>,
    pub history: Vec<Turn>,
}

impl ConversationContext {
    pub fn new(situation: impl Into<String>) -> Self {
        Self { situation: situation.into(), opening_cue: None, history: Vec::new() }
    }

    /// Context holding the last [`CONTEXT_WINDOW_TURNS`] of `turns`.
    pub fn windowed(situation: &str, opening_cue: Option<&str>, turns: &[Turn]) -> Self {
        let start = turns.len().saturating_sub(CONTEXT_WINDOW_TURNS);
        Self {
            situation: situation.to_string(),
            opening_cue: opening_cue.map(str::to_string),
            history: turns[start..].to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Turn {
    pub index: usize,
    pub speaker: String,
    pub text: String,
    pub selected_state: EgoState,
    pub addressed_state: EgoState,
    pub candidates: Vec<CandidateResponse>,
    pub fallback_used: bool,
}

impl Turn {
    /// A turn without candidate records, for fixtures and tests.
    pub fn bare(index: usize, speaker: &str, text: &str, selected: EgoState, addressed: EgoState) -> Self {
        Self {
            index,
            speaker: speaker.to_string(),
            text: text.to_string(),
            selected_state: selected,
            addressed_state: addressed,
            candidates: Vec::new(),
            fallback_used: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TranscriptError {
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed transcript {path}: {message}")]
    Malformed { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transcript {
    pub scenario_id: String,
    pub condition: Condition,
    pub seed: u64,
    pub turns: Vec<Turn>,
}

impl Transcript {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("transcript serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn save(&self, path: &Path) -> Result<(), TranscriptError> {
        let io = |source| TranscriptError::Io { path: path.display().to_string(), source };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io)?;
        }
        fs::write(path, self.to_json()).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, TranscriptError> {
        let text = fs::read_to_string(path).map_err(|source| TranscriptError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text).map_err(|e| TranscriptError::Malformed { path: path.display().to_string(), message: e.to_string() })
    }

    /// Agent names in order of first appearance.
    pub fn speakers(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for t in &self.turns {
            if !out.contains(&t.speaker.as_str()) {
                out.push(&t.speaker);
            }
        }
        out
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DialogueFailure {
    #[error("turn {turn}: {agent}'s {state} candidate failed: {source}")]
    Candidate { turn: usize, agent: String, state: EgoState, source: EgoStateError },
    #[error("turn {turn}: {agent}'s decision failed: {source}")]
    Decision { turn: usize, agent: String, source: DecideError },
}

/// A dialogue aborted mid-way. `partial` holds the completed turns.
#[derive(Debug, thiserror::Error)]
#[error("dialogue (seed {}) aborted after {} turns: {failure}", partial.seed, partial.turns.len())]
pub struct DialogueError {
    pub partial: Transcript,
    pub failure: Box<DialogueFailure>,
}

/// Run one dialogue of `2 * scenario.turns_per_agent` alternating turns,
/// opener first. Under `MemoryOff` no sub-agent touches its memory bank.
pub fn run_dialogue(scenario: &Scenario, condition: Condition, seed: u64, gateway: &Gateway) -> Result<Transcript, DialogueError> {
    let mut session = gateway.session(seed);
    let mut transcript = Transcript { scenario_id: scenario.scenario_id.clone(), condition, seed, turns: Vec::new() };
    let total = 2 * scenario.turns_per_agent;
    for index in 0..total {
        let agent = &scenario.agents[(scenario.opener + index) % 2];
        let context = ConversationContext::windowed(&scenario.situation, Some(&scenario.opening_line), &transcript.turns);
        let mut candidates = Vec::with_capacity(3);
        for profile in agent.ego_states.iter() {
            match generate_candidate(profile, &context, condition.memory_enabled(), &mut session, scenario.sampling) {
                Ok(c) => candidates.push(c),
                Err(source) => {
                    let failure = DialogueFailure::Candidate { turn: index, agent: agent.agent_name.clone(), state: profile.state, source };
                    return Err(DialogueError { partial: transcript, failure: Box::new(failure) });
                }
            }
        }
        let outcome = match decide(agent, &candidates, &context, &mut session, scenario.sampling, scenario.decision) {
            Ok(o) => o,
            Err(source) => {
                let failure = DialogueFailure::Decision { turn: index, agent: agent.agent_name.clone(), source };
                return Err(DialogueError { partial: transcript, failure: Box::new(failure) });
            }
        };
        transcript.turns.push(Turn {
            index,
            speaker: agent.agent_name.clone(),
            text: outcome.final_text,
            selected_state: outcome.selected_state,
            addressed_state: outcome.addressed_state,
            candidates,
            fallback_used: outcome.fallback_used,
        });
    }
    Ok(transcript)
}
