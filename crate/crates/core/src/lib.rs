//! Persona dialogue simulation with ego-state composite agents.
//!
//! Each persona is three sub-agents (Parent, Adult, Child) that each propose
//! an utterance, optionally informed by their own memory bank, and a
//! life-script-guided decision that picks one proposal verbatim. The
//! [`experiment`] module runs the memory ON/OFF ablation over many dialogues
//! and analyzes which ego states were selected.

pub mod agent;
pub mod dialogue;
pub mod ego_state;
pub mod experiment;
pub mod gateway;
pub mod memory;
pub mod scenario;
pub mod types;

pub use agent::{decide, parse_selection, AgentProfile, DecisionOptions, EgoStates, LifeScript, SelectionOutcome};
pub use dialogue::{run_dialogue, ConversationContext, DialogueError, Transcript, Turn};
pub use ego_state::{formulate_query, generate_candidate, CandidateResponse, EgoStateProfile};
pub use experiment::{run_ablation, write_run, AblationRun, AblationSummary, ExperimentConfig};
pub use gateway::{BackendConfig, BackendKind, ChatRequest, ChatResponse, EmbeddingVector, Gateway, Sampling, Session, Telemetry};
pub use memory::{cosine_similarity, load_bank, save_bank, MemoryBank, MemoryItem, RetrievalResult};
pub use scenario::{load_scenario, validate_scenario, Scenario, Violation};
pub use types::{Condition, EgoState};
