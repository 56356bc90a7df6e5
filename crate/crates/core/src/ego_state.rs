//! A single ego-state sub-agent: optional memory lookup, then one candidate
//! utterance.
//!
//! Prompt layout for the user message (the system prompt is the ego state's
//! own persona prompt):
//!
//! ```text
//! RELEVANT MEMORY                      <- only when something was retrieved
//! <<<
//! [1] context: ...
//! reaction: ...
//! emotions: ...
//! tone: ...
//! >>>
//!
//! SITUATION: ...
//! OPENING: ...                         <- only before the first turn
//! DIALOGUE:
//! Taylor: ...
//!
//! Respond as the <state> ego state in one utterance.
//! ```

use serde::{Deserialize, Serialize};

use crate::dialogue::ConversationContext;
use crate::gateway::{ChatRequest, GatewayError, Sampling, Session};
use crate::memory::{MemoryBank, MemoryError, RetrievalResult};
use crate::types::EgoState;

/// Upper bound on chat calls spent on one candidate, query formulation included.
pub const MAX_CHAT_CALLS: usize = 3;
pub const QUERY_MAX_CHARS: usize = 200;
pub const MEMORY_HEADER: &str = "RELEVANT MEMORY";

#[derive(Debug, thiserror::Error)]
pub enum EgoStateError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error("{state} ego state produced no text after {attempts} attempts")]
    EmptyOutput { state: EgoState, attempts: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EgoStateProfile {
    pub state: EgoState,
    pub system_prompt: String,
    pub memory_bank: Option<MemoryBank>,
    pub retrieval_k: usize,
    pub min_score: Option<f64>,
}

impl EgoStateProfile {
    pub fn new(state: EgoState, system_prompt: impl Into<String>) -> Self {
        Self { state, system_prompt: system_prompt.into(), memory_bank: None, retrieval_k: 1, min_score: None }
    }

    pub fn with_bank(mut self, bank: MemoryBank) -> Self {
        self.memory_bank = Some(bank);
        self
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.retrieval_k = k;
        self
    }

    fn usable_bank(&self) -> Option<&MemoryBank> {
        self.memory_bank.as_ref().filter(|b| !b.is_empty())
    }
}

/// One proposed utterance with its retrieval trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateResponse {
    pub source_state: EgoState,
    pub text: String,
    pub query_used: Option<String>,
    pub retrieved: Vec<RetrievalResult>,
    pub tone_hint: Option<String>,
}

fn last_utterance(context: &ConversationContext) -> Option<&str> {
    context.history.last().map(|t| t.text.as_str())
}

fn truncate_chars(s: &str, max: usize) -> String {
    s.chars().take(max).collect()
}

/// Build the memory search query. Returns the query and the number of chat
/// calls spent on it.
fn formulate_query_counted(
    profile: &EgoStateProfile,
    context: &ConversationContext,
    session: &mut Session,
    sampling: Sampling,
) -> Result<(String, usize), GatewayError> {
    let template = match last_utterance(context) {
        Some(last) => format!("recall: {last}"),
        None => context.situation.clone(),
    };
    if session.is_scripted() {
        return Ok((template, 0));
    }
    let mut user = render_dialogue(context);
    user.push_str(
        "\nWrite one short search query describing a past experience from your memory that would help you respond. \
         Reply with the query only.",
    );
    let response = session.complete_chat(&ChatRequest::new(profile.system_prompt.clone(), user, sampling))?;
    let line = response.text.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or_default();
    let query = if line.is_empty() { template } else { truncate_chars(line, QUERY_MAX_CHARS) };
    Ok((query, 1))
}

pub fn formulate_query(
    profile: &EgoStateProfile,
    context: &ConversationContext,
    session: &mut Session,
    sampling: Sampling,
) -> Result<String, GatewayError> {
    formulate_query_counted(profile, context, session, sampling).map(|(q, _)| q)
}

pub(crate) fn render_dialogue(context: &ConversationContext) -> String {
    let mut out = format!("SITUATION: {}\n", context.situation);
    if context.history.is_empty() {
        if let Some(cue) = &context.opening_cue {
            out.push_str(&format!("OPENING: {cue}\n"));
        }
    }
    out.push_str("DIALOGUE:\n");
    if context.history.is_empty() {
        out.push_str("(no turns yet)\n");
    }
    for turn in &context.history {
        out.push_str(&format!("{}: {}\n", turn.speaker, turn.text));
    }
    out
}

pub fn render_memory_block(retrieved: &[RetrievalResult]) -> String {
    let mut out = format!("{MEMORY_HEADER}\n<<<\n");
    for (i, hit) in retrieved.iter().enumerate() {
        out.push_str(&format!(
            "[{}] context: {}\nreaction: {}\nemotions: {}\ntone: {}\n",
            i + 1,
            hit.item.context,
            hit.item.reaction,
            hit.item.emotions.join(", "),
            hit.item.tone
        ));
    }
    out.push_str(">>>\n");
    out
}

/// Deterministic prompt for one candidate.
pub fn assemble_prompt(
    profile: &EgoStateProfile,
    context: &ConversationContext,
    retrieved: &[RetrievalResult],
    sampling: Sampling,
) -> ChatRequest {
    let mut user = String::new();
    if !retrieved.is_empty() {
        user.push_str(&render_memory_block(retrieved));
        user.push('\n');
    }
    user.push_str(&render_dialogue(context));
    user.push_str(&format!("\nRespond as the {} ego state in one utterance.", profile.state));
    ChatRequest::new(profile.system_prompt.clone(), user, sampling)
}

pub fn generate_candidate(
    profile: &EgoStateProfile,
    context: &ConversationContext,
    memory_enabled: bool,
    session: &mut Session,
    sampling: Sampling,
) -> Result<CandidateResponse, EgoStateError> {
    let mut chat_budget = MAX_CHAT_CALLS;
    let (query_used, retrieved) = match profile.usable_bank().filter(|_| memory_enabled) {
        Some(bank) => {
            let (query, spent) = formulate_query_counted(profile, context, session, sampling)?;
            chat_budget -= spent;
            session.telemetry().record_retrieval();
            let hits = bank.retrieve_top_k(&query, profile.retrieval_k.max(1), &*session, profile.min_score)?;
            (Some(query), hits)
        }
        None => (None, Vec::new()),
    };
    let request = assemble_prompt(profile, context, &retrieved, sampling);
    for _ in 0..chat_budget {
        let response = session.complete_chat(&request)?;
        let text = response.text.trim();
        if !text.is_empty() {
            return Ok(CandidateResponse {
                source_state: profile.state,
                text: text.to_string(),
                query_used,
                tone_hint: retrieved.first().map(|r| r.item.tone.clone()),
                retrieved,
            });
        }
    }
    Err(EgoStateError::EmptyOutput { state: profile.state, attempts: chat_budget })
}
