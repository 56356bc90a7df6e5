//! Deterministic offline backend internals.
//!
//! Embeddings: each lowercase alphanumeric token is hashed with SHA-256, the
//! first eight digest bytes (little-endian `u64`) modulo the dimension pick a
//! bucket, the bucket is incremented, and the vector is scaled to unit L2 norm.
//! Text with no alphanumeric token is treated as a single token (its trimmed
//! form).
//!
//! Chat: a SHA-256 digest of (config seed, session seed, request) seeds a
//! ChaCha8 stream that picks from fixed phrase tables. Selection requests are
//! recognised by the selection format line and answered in that format.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{ChatRequest, EmbeddingVector, GatewayError};
use crate::agent::SELECTION_FORMAT;
use crate::types::EgoState;

pub fn tokenize(text: &str) -> Vec<String> {
    let tokens: Vec<String> = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect();
    if tokens.is_empty() && !text.trim().is_empty() {
        vec![text.trim().to_lowercase()]
    } else {
        tokens
    }
}

fn token_bucket(token: &str, dim: usize) -> usize {
    let digest = Sha256::digest(token.as_bytes());
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    (u64::from_le_bytes(head) % dim as u64) as usize
}

/// Hashed bag-of-tokens projection, unit-normalized.
pub fn hash_bag_embedding(text: &str, dim: usize) -> Result<EmbeddingVector, GatewayError> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(GatewayError::EmptyText);
    }
    let mut values = vec![0.0f64; dim];
    for token in &tokens {
        values[token_bucket(token, dim)] += 1.0;
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut values {
        *v /= norm;
    }
    EmbeddingVector::new(values)
}

fn request_digest(config_seed: u64, session_seed: u64, request: &ChatRequest) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(b"tasim-scripted-v1");
    hasher.update(config_seed.to_le_bytes());
    hasher.update(session_seed.to_le_bytes());
    hasher.update(request.system_prompt.as_bytes());
    hasher.update([0x1e]);
    for message in &request.messages {
        hasher.update(format!("{:?}", message.role).as_bytes());
        hasher.update([0x1f]);
        hasher.update(message.content.as_bytes());
        hasher.update([0x1e]);
    }
    let mut out = [0u8; 32];
    out.copy_from_slice(&hasher.finalize());
    out
}

// Selection weights (parent, adult, child): the stub leans Adult, like a
// professional exchange would.
const SELECT_WEIGHTS: [u32; 3] = [2, 5, 2];
const TARGET_WEIGHTS: [u32; 3] = [2, 5, 3];

fn weighted_state(rng: &mut ChaCha8Rng, weights: [u32; 3]) -> EgoState {
    let total: u32 = weights.iter().sum();
    let mut roll = rng.random_range(0..total);
    for (state, w) in EgoState::ALL.into_iter().zip(weights) {
        if roll < w {
            return state;
        }
        roll -= w;
    }
    EgoState::Adult
}

const PARENT_OPENERS: &[&str] = &["Listen,", "Frankly,", "I expect better:", "Let me be clear,"];
const PARENT_BODIES: &[&str] = &[
    "deadlines are commitments and this one was missed.",
    "this is not the standard we agreed to.",
    "you should have raised this before Friday.",
    "we do not leave the team waiting like this.",
];
const ADULT_OPENERS: &[&str] = &["Okay,", "Let's look at this:", "To be concrete,", "Right,"];
const ADULT_BODIES: &[&str] = &[
    "what is left to finish and when can it be done?",
    "the report is late, so let's agree on a new date.",
    "I can share the draft today and close the gaps by Wednesday.",
    "let's list the blockers and assign owners.",
];
const CHILD_OPENERS: &[&str] = &["Honestly,", "Ugh,", "I know, I know,", "Sorry,"];
const CHILD_BODIES: &[&str] = &[
    "I was so close and it just slipped away again.",
    "I feel terrible, I really thought I'd make it.",
    "everyone is looking at me and I hate that.",
    "I'm scared this makes me look useless.",
];

fn responding_state(request: &ChatRequest) -> Option<EgoState> {
    let last = request.messages.last()?;
    let line = last.content.lines().rev().find(|l| l.starts_with("Respond as the "))?;
    line.trim_start_matches("Respond as the ").split_whitespace().next()?.parse().ok()
}

fn recalled_reaction(request: &ChatRequest) -> Option<String> {
    let last = request.messages.last()?;
    last.content
        .lines()
        .find_map(|l| l.trim().strip_prefix("reaction: "))
        .map(|r| r.trim().to_string())
        .filter(|r| !r.is_empty())
}

/// Seed-derived reply: a pure function of its arguments.
pub fn seeded_text(config_seed: u64, session_seed: u64, request: &ChatRequest) -> String {
    let mut rng = ChaCha8Rng::from_seed(request_digest(config_seed, session_seed, request));
    if request.system_prompt.contains(SELECTION_FORMAT) {
        let selected = weighted_state(&mut rng, SELECT_WEIGHTS);
        let target = weighted_state(&mut rng, TARGET_WEIGHTS);
        return format!("SELECT={selected}; TARGET={target}");
    }
    let (openers, bodies) = match responding_state(request) {
        Some(EgoState::Parent) => (PARENT_OPENERS, PARENT_BODIES),
        Some(EgoState::Child) => (CHILD_OPENERS, CHILD_BODIES),
        _ => (ADULT_OPENERS, ADULT_BODIES),
    };
    let opener = openers.choose(&mut rng).copied().unwrap_or("Well,");
    let body = bodies.choose(&mut rng).copied().unwrap_or("let's continue.");
    match recalled_reaction(request) {
        Some(reaction) => format!("{opener} {body} ({reaction})"),
        None => format!("{opener} {body}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::Sampling;

    #[test]
    fn unit_norm() {
        for text in ["quarterly report", "a", "Where is the Q3 report?", "??", "x y z x y z w"] {
            let v = hash_bag_embedding(text, 256).unwrap();
            assert!((v.norm() - 1.0).abs() < 1e-9, "{text}");
        }
    }

    #[test]
    fn punctuation_only_text_still_embeds() {
        assert!(hash_bag_embedding("?!", 64).is_ok());
        assert!(hash_bag_embedding("", 64).is_err());
    }

    #[test]
    fn case_and_punctuation_insensitive() {
        assert_eq!(hash_bag_embedding("Q3 report!", 256).unwrap(), hash_bag_embedding("q3, REPORT", 256).unwrap());
    }

    #[test]
    fn selection_requests_get_selection_lines() {
        let r = ChatRequest::new(format!("script\n{SELECTION_FORMAT}"), "candidates", Sampling::default());
        let text = seeded_text(1, 2, &r);
        assert!(crate::agent::parse_selection(&text).is_ok(), "{text}");
    }

    #[test]
    fn generation_echoes_recalled_reaction() {
        let r = ChatRequest::new(
            "p",
            "RELEVANT MEMORY\nreaction: apologize\nRespond as the child ego state in one utterance.",
            Sampling::default(),
        );
        assert!(seeded_text(0, 0, &r).ends_with("(apologize)"));
    }
}
