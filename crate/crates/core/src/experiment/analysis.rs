//! Counting selected ego states and classifying transactions over stored
//! transcripts.

use serde::{Deserialize, Serialize};

use crate::dialogue::Transcript;
use crate::types::{Condition, EgoState};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnalysisError {
    #[error("agent {0:?} does not appear in any transcript")]
    AgentNotFound(String),
    #[error("transcripts mix conditions ({0} and {1})")]
    MixedConditions(Condition, Condition),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateCounts {
    pub parent: u64,
    pub adult: u64,
    pub child: u64,
}

impl StateCounts {
    pub fn get(&self, state: EgoState) -> u64 {
        match state {
            EgoState::Parent => self.parent,
            EgoState::Adult => self.adult,
            EgoState::Child => self.child,
        }
    }

    pub fn bump(&mut self, state: EgoState) {
        match state {
            EgoState::Parent => self.parent += 1,
            EgoState::Adult => self.adult += 1,
            EgoState::Child => self.child += 1,
        }
    }

    pub fn sum(&self) -> u64 {
        self.parent + self.adult + self.child
    }

    pub fn max(&self) -> u64 {
        self.parent.max(self.adult).max(self.child)
    }
}

/// Selected-state counts for one agent under one condition. Fallback turns are
/// included in `counts` and also tallied in `fallbacks`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EgoStateDistribution {
    pub agent_name: String,
    /// `None` only for an empty transcript set.
    pub condition: Option<Condition>,
    pub counts: StateCounts,
    pub total: u64,
    pub fallbacks: u64,
}

fn shared_condition(transcripts: &[Transcript]) -> Result<Option<Condition>, AnalysisError> {
    let mut iter = transcripts.iter().map(|t| t.condition);
    let Some(first) = iter.next() else { return Ok(None) };
    for c in iter {
        if c != first {
            return Err(AnalysisError::MixedConditions(first, c));
        }
    }
    Ok(Some(first))
}

pub fn analyze_distribution(transcripts: &[Transcript], agent_name: &str) -> Result<EgoStateDistribution, AnalysisError> {
    let condition = shared_condition(transcripts)?;
    let mut counts = StateCounts::default();
    let mut fallbacks = 0;
    let mut seen = false;
    for turn in transcripts.iter().flat_map(|t| &t.turns).filter(|t| t.speaker == agent_name) {
        seen = true;
        counts.bump(turn.selected_state);
        fallbacks += u64::from(turn.fallback_used);
    }
    if !seen && !transcripts.is_empty() {
        return Err(AnalysisError::AgentNotFound(agent_name.to_string()));
    }
    Ok(EgoStateDistribution { agent_name: agent_name.to_string(), condition, total: counts.sum(), counts, fallbacks })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransactionKind {
    Complementary,
    Crossed,
    Unclassified,
}

impl TransactionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TransactionKind::Complementary => "complementary",
            TransactionKind::Crossed => "crossed",
            TransactionKind::Unclassified => "unclassified",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransactionAnnotation {
    pub turn_index: usize,
    pub speaker: String,
    pub kind: TransactionKind,
    /// State the previous speaker addressed; absent on the first turn.
    pub prev_target: Option<EgoState>,
    pub cur_source: EgoState,
}

/// A reply is complementary when it comes from the ego state the previous
/// utterance addressed, crossed otherwise. The first turn is unclassified.
pub fn classify_transactions(transcript: &Transcript) -> Vec<TransactionAnnotation> {
    let mut out = Vec::with_capacity(transcript.turns.len());
    let mut prev_target = None;
    for turn in &transcript.turns {
        let kind = match prev_target {
            None => TransactionKind::Unclassified,
            Some(target) if target == turn.selected_state => TransactionKind::Complementary,
            Some(_) => TransactionKind::Crossed,
        };
        out.push(TransactionAnnotation {
            turn_index: turn.index,
            speaker: turn.speaker.clone(),
            kind,
            prev_target,
            cur_source: turn.selected_state,
        });
        prev_target = Some(turn.addressed_state);
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransactionTally {
    pub complementary: u64,
    pub crossed: u64,
    pub unclassified: u64,
    /// Child replies to a Parent utterance that addressed the Child.
    pub parent_to_child: u64,
}

impl TransactionTally {
    pub fn add_transcript(&mut self, transcript: &Transcript, annotations: &[TransactionAnnotation]) {
        for a in annotations {
            match a.kind {
                TransactionKind::Complementary => self.complementary += 1,
                TransactionKind::Crossed => self.crossed += 1,
                TransactionKind::Unclassified => self.unclassified += 1,
            }
        }
        for pair in transcript.turns.windows(2) {
            let (prev, cur) = (&pair[0], &pair[1]);
            if prev.selected_state == EgoState::Parent && prev.addressed_state == EgoState::Child && cur.selected_state == EgoState::Child {
                self.parent_to_child += 1;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueTransactions {
    pub dialogue: usize,
    pub seed: u64,
    pub annotations: Vec<TransactionAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionTransactions {
    pub condition: Condition,
    pub dialogues: Vec<DialogueTransactions>,
    pub tally: TransactionTally,
}

/// Everything the exporter writes, derived from transcripts alone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub agents: Vec<String>,
    pub distributions: Vec<EgoStateDistribution>,
    pub transactions: Vec<ConditionTransactions>,
}

impl AnalysisReport {
    pub fn distribution(&self, agent: &str, condition: Condition) -> Option<&EgoStateDistribution> {
        self.distributions.iter().find(|d| d.agent_name == agent && d.condition == Some(condition))
    }
}

/// Analyze transcripts grouped by condition. Conditions are reported in
/// memory_on, memory_off order; agents in order of first appearance.
pub fn analyze(groups: &[(Condition, Vec<Transcript>)]) -> Result<AnalysisReport, AnalysisError> {
    let mut ordered: Vec<&(Condition, Vec<Transcript>)> = groups.iter().collect();
    ordered.sort_by_key(|(c, _)| *c);

    let mut agents: Vec<String> = Vec::new();
    for (_, transcripts) in &ordered {
        for t in transcripts {
            for s in t.speakers() {
                if !agents.iter().any(|a| a == s) {
                    agents.push(s.to_string());
                }
            }
        }
    }

    let mut distributions = Vec::new();
    let mut transactions = Vec::new();
    for (condition, transcripts) in ordered {
        if let Some(found) = shared_condition(transcripts)? {
            if found != *condition {
                return Err(AnalysisError::MixedConditions(*condition, found));
            }
        }
        for agent in &agents {
            let mut d = match analyze_distribution(transcripts, agent) {
                Ok(d) => d,
                Err(AnalysisError::AgentNotFound(_)) => EgoStateDistribution {
                    agent_name: agent.clone(),
                    condition: None,
                    counts: StateCounts::default(),
                    total: 0,
                    fallbacks: 0,
                },
                Err(e) => return Err(e),
            };
            d.condition = Some(*condition);
            distributions.push(d);
        }
        let mut tally = TransactionTally::default();
        let mut dialogues = Vec::with_capacity(transcripts.len());
        for (i, t) in transcripts.iter().enumerate() {
            let annotations = classify_transactions(t);
            tally.add_transcript(t, &annotations);
            dialogues.push(DialogueTransactions { dialogue: i, seed: t.seed, annotations });
        }
        transactions.push(ConditionTransactions { condition: *condition, dialogues, tally });
    }
    Ok(AnalysisReport { agents, distributions, transactions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialogue::Turn;
    use EgoState::*;

    fn transcript(condition: Condition, turns: &[(&str, EgoState, EgoState)]) -> Transcript {
        Transcript {
            scenario_id: "fixture".into(),
            condition,
            seed: 0,
            turns: turns.iter().enumerate().map(|(i, (who, sel, tgt))| Turn::bare(i, who, "x", *sel, *tgt)).collect(),
        }
    }

    #[test]
    fn rule_definition() {
        let t = transcript(Condition::MemoryOn, &[("T", Parent, Child), ("J", Child, Parent)]);
        let a = classify_transactions(&t);
        assert_eq!(a[0].kind, TransactionKind::Unclassified);
        assert_eq!(a[1].kind, TransactionKind::Complementary);
        let t = transcript(Condition::MemoryOn, &[("T", Adult, Adult), ("J", Child, Parent)]);
        assert_eq!(classify_transactions(&t)[1].kind, TransactionKind::Crossed);
        assert!(classify_transactions(&transcript(Condition::MemoryOn, &[])).is_empty());
    }

    #[test]
    fn distribution_counts_and_fallbacks() {
        let mut t = transcript(Condition::MemoryOff, &[("T", Parent, Child), ("J", Child, Parent), ("T", Adult, Adult), ("J", Adult, Adult)]);
        t.turns[2].fallback_used = true;
        let d = analyze_distribution(&[t.clone()], "T").unwrap();
        assert_eq!(d.counts, StateCounts { parent: 1, adult: 1, child: 0 });
        assert_eq!((d.total, d.fallbacks), (2, 1));
        assert_eq!(d.condition, Some(Condition::MemoryOff));
        assert_eq!(analyze_distribution(&[t], "Nobody"), Err(AnalysisError::AgentNotFound("Nobody".into())));
    }

    #[test]
    fn empty_set_is_all_zero() {
        let d = analyze_distribution(&[], "John").unwrap();
        assert_eq!(d.counts, StateCounts::default());
        assert_eq!(d.total, 0);
    }

    #[test]
    fn mixed_conditions_rejected() {
        let a = transcript(Condition::MemoryOn, &[("T", Adult, Adult)]);
        let b = transcript(Condition::MemoryOff, &[("T", Adult, Adult)]);
        assert!(matches!(analyze_distribution(&[a, b], "T"), Err(AnalysisError::MixedConditions(..))));
    }

    #[test]
    fn parent_to_child_tally() {
        let t = transcript(Condition::MemoryOn, &[("T", Parent, Child), ("J", Child, Parent), ("T", Parent, Adult), ("J", Child, Adult)]);
        let mut tally = TransactionTally::default();
        tally.add_transcript(&t, &classify_transactions(&t));
        assert_eq!(tally.parent_to_child, 1);
        assert_eq!((tally.complementary, tally.crossed, tally.unclassified), (2, 1, 1));
    }
}
