//! Composite persona: three ego-state sub-agents plus a life script, and the
//! meta-decision that picks one candidate as the final utterance.
//!
//! The decision never rewrites text. It returns the chosen ego state and the
//! ego state of the interlocutor it addresses (used later to classify
//! transactions).

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::dialogue::ConversationContext;
use crate::ego_state::{render_dialogue, CandidateResponse, EgoStateProfile};
use crate::gateway::{ChatRequest, GatewayError, Sampling, Session};
use crate::types::EgoState;

pub const SELECTION_FORMAT: &str = "SELECT=<parent|adult|child>; TARGET=<parent|adult|child>";

/// Appended to the life script to form the decision system prompt.
pub const SELECTION_INSTRUCTION: &str = "\
You are the deciding self of this person. Three parts of you (Parent, Adult, Child) have each proposed \
what to say next. Guided by the life script above and the conversation so far, choose the one proposal \
this person would actually say. Also name the ego state of the other person that the chosen reply is \
addressed to.
Answer with exactly one line in this format and nothing else:
SELECT=<parent|adult|child>; TARGET=<parent|adult|child>";

pub const MAX_SELECTION_ATTEMPTS: usize = 3;
pub const FALLBACK_STATE: EgoState = EgoState::Adult;

#[derive(Debug, thiserror::Error)]
pub enum DecideError {
    #[error("no candidate for the {0} ego state")]
    MissingCandidate(EgoState),
    #[error("more than one candidate for the {0} ego state")]
    DuplicateCandidate(EgoState),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no SELECT=<state>; TARGET=<state> line in {0:?}")]
pub struct SelectionParseError(pub String);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LifeScript {
    pub name: String,
    pub script_text: String,
}

/// Exactly one profile per ego state.
#[derive(Debug, Clone, PartialEq)]
pub struct EgoStates {
    pub parent: EgoStateProfile,
    pub adult: EgoStateProfile,
    pub child: EgoStateProfile,
}

impl EgoStates {
    pub fn get(&self, state: EgoState) -> &EgoStateProfile {
        match state {
            EgoState::Parent => &self.parent,
            EgoState::Adult => &self.adult,
            EgoState::Child => &self.child,
        }
    }

    pub fn get_mut(&mut self, state: EgoState) -> &mut EgoStateProfile {
        match state {
            EgoState::Parent => &mut self.parent,
            EgoState::Adult => &mut self.adult,
            EgoState::Child => &mut self.child,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &EgoStateProfile> {
        [&self.parent, &self.adult, &self.child].into_iter()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentProfile {
    pub agent_name: String,
    pub life_script: LifeScript,
    pub ego_states: EgoStates,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub selected_state: EgoState,
    pub final_text: String,
    pub addressed_state: EgoState,
    pub rationale: String,
    pub fallback_used: bool,
}

/// What the decider is shown besides candidate texts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionOptions {
    /// Also list each candidate's retrieved memory contexts.
    #[serde(default)]
    pub show_retrieval: bool,
}

static SELECTION_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\bSELECT\s*=\s*(parent|adult|child)\s*;\s*TARGET\s*=\s*(parent|adult|child)\b").expect("valid regex")
});

/// Extract `(selected, addressed)` from the first line carrying a selection.
pub fn parse_selection(raw: &str) -> Result<(EgoState, EgoState), SelectionParseError> {
    for line in raw.lines() {
        if let Some(caps) = SELECTION_RE.captures(line) {
            let selected = caps[1].parse().expect("regex admits only state labels");
            let addressed = caps[2].parse().expect("regex admits only state labels");
            return Ok((selected, addressed));
        }
    }
    Err(SelectionParseError(raw.to_string()))
}

/// Order candidates as parent, adult, child; reject gaps and duplicates.
fn by_state(candidates: &[CandidateResponse]) -> Result<[&CandidateResponse; 3], DecideError> {
    let mut slots: [Option<&CandidateResponse>; 3] = [None; 3];
    for c in candidates {
        let slot = &mut slots[c.source_state as usize];
        if slot.is_some() {
            return Err(DecideError::DuplicateCandidate(c.source_state));
        }
        *slot = Some(c);
    }
    let get = |s: EgoState| slots[s as usize].ok_or(DecideError::MissingCandidate(s));
    Ok([get(EgoState::Parent)?, get(EgoState::Adult)?, get(EgoState::Child)?])
}

pub fn selection_prompt(
    agent: &AgentProfile,
    candidates: &[CandidateResponse],
    context: &ConversationContext,
    sampling: Sampling,
    options: DecisionOptions,
) -> Result<ChatRequest, DecideError> {
    let ordered = by_state(candidates)?;
    let system = format!("{}\n\n{}", agent.life_script.script_text.trim_end(), SELECTION_INSTRUCTION);
    let mut user = render_dialogue(context);
    user.push_str(&format!("\nCANDIDATE RESPONSES ({} is speaking)\n", agent.agent_name));
    for c in ordered {
        user.push_str(&format!("[{}] {}\n", c.source_state, c.text));
        if let Some(tone) = &c.tone_hint {
            user.push_str(&format!("  tone: {tone}\n"));
        }
        if options.show_retrieval {
            for hit in &c.retrieved {
                user.push_str(&format!("  memory: {}\n", hit.item.context));
            }
        }
    }
    user.push_str(&format!("\nAnswer: {SELECTION_FORMAT}"));
    Ok(ChatRequest::new(system, user, sampling))
}

/// Pick one of the three candidates as the agent's utterance.
pub fn decide(
    agent: &AgentProfile,
    candidates: &[CandidateResponse],
    context: &ConversationContext,
    session: &mut Session,
    sampling: Sampling,
    options: DecisionOptions,
) -> Result<SelectionOutcome, DecideError> {
    let ordered = by_state(candidates)?;
    let request = selection_prompt(agent, candidates, context, sampling, options)?;
    let mut last_reply = String::new();
    for _ in 0..MAX_SELECTION_ATTEMPTS {
        let reply = session.complete_chat(&request)?.text;
        if let Ok((selected, addressed)) = parse_selection(&reply) {
            return Ok(SelectionOutcome {
                selected_state: selected,
                final_text: ordered[selected as usize].text.clone(),
                addressed_state: addressed,
                rationale: reply.trim().to_string(),
                fallback_used: false,
            });
        }
        last_reply = reply;
    }
    Ok(SelectionOutcome {
        selected_state: FALLBACK_STATE,
        final_text: ordered[FALLBACK_STATE as usize].text.clone(),
        addressed_state: FALLBACK_STATE,
        rationale: format!(
            "fallback: no parseable selection after {MAX_SELECTION_ATTEMPTS} attempts; last reply: {}",
            last_reply.trim()
        ),
        fallback_used: true,
    })
}
