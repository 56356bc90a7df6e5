//! Per-ego-state memory banks with an exact cosine top-k index.
//!
//! Bank file format (strict, unknown fields rejected):
//!
//! ```json
//! { "ego_state": "parent", "items": [
//!     { "id": "p1", "context": "...", "reaction": "...", "emotions": ["..."], "tone": "..." } ] }
//! ```
//!
//! Embeddings are never persisted; [`MemoryBank::build_index`] rebuilds them
//! from whatever embedder is configured.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::gateway::{Embedder, EmbeddingVector, GatewayError};
use crate::types::EgoState;

#[derive(Debug, thiserror::Error)]
pub enum MemoryError {
    #[error("vector dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("zero-norm vector has no direction")]
    ZeroNorm,
    #[error("bank has not been indexed")]
    Unindexed,
    #[error("duplicate memory id {id:?} (items {first} and {second})")]
    DuplicateId { id: String, first: usize, second: usize },
    #[error("memory item {ordinal}: {message}")]
    InvalidItem { ordinal: usize, message: String },
    #[error("invalid bank document: {0}")]
    InvalidBank(String),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Embedding(#[from] GatewayError),
}

/// One remembered situation. `context` is the embedded key; the rest is
/// metadata handed back on retrieval.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryItem {
    pub id: String,
    pub context: String,
    pub reaction: String,
    pub emotions: Vec<String>,
    pub tone: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub item: MemoryItem,
    pub score: f64,
}

pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, MemoryError> {
    if a.dimension() != b.dimension() {
        return Err(MemoryError::DimensionMismatch(a.dimension(), b.dimension()));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(MemoryError::ZeroNorm);
    }
    let dot: f64 = a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone)]
struct IndexEntry {
    item: usize,
    vector: EmbeddingVector,
}

#[derive(Debug, Clone)]
pub struct MemoryBank {
    ego_state: EgoState,
    items: Vec<MemoryItem>,
    index: Option<Vec<IndexEntry>>,
}

impl PartialEq for MemoryBank {
    fn eq(&self, other: &Self) -> bool {
        self.ego_state == other.ego_state && self.items == other.items
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BankDocument {
    ego_state: EgoState,
    items: Vec<Value>,
}

#[derive(Serialize)]
struct BankDocumentOut<'a> {
    ego_state: EgoState,
    items: &'a [MemoryItem],
}

// Heap entry ordered so the *worst* kept candidate sits on top.
struct Ranked<'a> {
    score: f64,
    id: &'a str,
    item: usize,
}

impl Ranked<'_> {
    // Better = higher score, then smaller id.
    fn rank_cmp(&self, other: &Self) -> Ordering {
        other.score.total_cmp(&self.score).then_with(|| self.id.cmp(other.id))
    }
}

impl PartialEq for Ranked<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.rank_cmp(other) == Ordering::Equal
    }
}
impl Eq for Ranked<'_> {}
impl PartialOrd for Ranked<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Ranked<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rank_cmp(other)
    }
}

impl MemoryBank {
    pub fn new(ego_state: EgoState) -> Self {
        Self { ego_state, items: Vec::new(), index: None }
    }

    /// Build an unindexed bank, rejecting empty contexts and duplicate ids.
    pub fn from_items(ego_state: EgoState, items: Vec<MemoryItem>) -> Result<Self, MemoryError> {
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for (ordinal, item) in items.iter().enumerate() {
            validate_item(ordinal, item)?;
            if let Some(first) = seen.insert(item.id.as_str(), ordinal) {
                return Err(MemoryError::DuplicateId { id: item.id.clone(), first, second: ordinal });
            }
        }
        Ok(Self { ego_state, items, index: None })
    }

    pub fn ego_state(&self) -> EgoState {
        self.ego_state
    }

    pub fn items(&self) -> &[MemoryItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn is_indexed(&self) -> bool {
        self.index.is_some()
    }

    /// Embed every item context. All vectors must share one dimension.
    pub fn build_index(&mut self, embed: &dyn Embedder) -> Result<(), MemoryError> {
        let mut entries = Vec::with_capacity(self.items.len());
        for (i, item) in self.items.iter().enumerate() {
            let vector = embed.embed(&item.context)?;
            if let Some(first) = entries.first().map(|e: &IndexEntry| e.vector.dimension()) {
                if vector.dimension() != first {
                    return Err(MemoryError::DimensionMismatch(first, vector.dimension()));
                }
            }
            entries.push(IndexEntry { item: i, vector });
        }
        self.index = Some(entries);
        Ok(())
    }

    pub fn add_memory(&mut self, item: MemoryItem, embed: &dyn Embedder) -> Result<(), MemoryError> {
        let ordinal = self.items.len();
        validate_item(ordinal, &item)?;
        if let Some(first) = self.items.iter().position(|m| m.id == item.id) {
            return Err(MemoryError::DuplicateId { id: item.id, first, second: ordinal });
        }
        // Adding to a fresh bank indexes it; adding to a loaded but unindexed
        // bank indexes everything so the invariant "one entry per item" holds.
        if self.index.is_none() {
            self.build_index(embed)?;
        }
        let vector = embed.embed(&item.context)?;
        if let Some(dim) = self.index.as_ref().and_then(|ix| ix.first()).map(|e| e.vector.dimension()) {
            if dim != vector.dimension() {
                return Err(MemoryError::DimensionMismatch(dim, vector.dimension()));
            }
        }
        self.items.push(item);
        self.index.get_or_insert_with(Vec::new).push(IndexEntry { item: ordinal, vector });
        Ok(())
    }

    /// Exact top-k by cosine similarity to `query`, best first; equal scores
    /// order by ascending id. Entries below `min_score` are dropped.
    pub fn retrieve_top_k(
        &self,
        query: &str,
        k: usize,
        embed: &dyn Embedder,
        min_score: Option<f64>,
    ) -> Result<Vec<RetrievalResult>, MemoryError> {
        if k == 0 {
            return Err(MemoryError::ZeroK);
        }
        let index = self.index.as_ref().ok_or(MemoryError::Unindexed)?;
        if index.is_empty() {
            return Ok(Vec::new());
        }
        let query = embed.embed(query)?;
        let mut heap: BinaryHeap<Ranked<'_>> = BinaryHeap::with_capacity(k + 1);
        for entry in index {
            let score = cosine_similarity(&query, &entry.vector)?;
            if min_score.is_some_and(|min| score < min) {
                continue;
            }
            heap.push(Ranked { score, id: &self.items[entry.item].id, item: entry.item });
            if heap.len() > k {
                heap.pop();
            }
        }
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|r| RetrievalResult { item: self.items[r.item].clone(), score: r.score })
            .collect())
    }

    pub fn to_json(&self) -> String {
        let doc = BankDocumentOut { ego_state: self.ego_state, items: &self.items };
        let mut s = serde_json::to_string_pretty(&doc).expect("bank serializes");
        s.push('\n');
        s
    }

    /// Parse a bank document without indexing it.
    pub fn from_json(text: &str) -> Result<Self, MemoryError> {
        let (ego_state, items) = parse_bank_document(text)?;
        Self::from_items(ego_state, items)
    }
}

/// Structural parse of a bank document: strict fields, per-item errors carry
/// the item ordinal. Id uniqueness and content checks are left to the caller.
pub fn parse_bank_document(text: &str) -> Result<(EgoState, Vec<MemoryItem>), MemoryError> {
    let raw: Value = serde_json::from_str(text).map_err(|e| MemoryError::InvalidBank(e.to_string()))?;
    if let Some(label) = raw.get("ego_state").and_then(Value::as_str) {
        label.parse::<EgoState>().map_err(|e| MemoryError::InvalidBank(e.to_string()))?;
    }
    let doc: BankDocument = serde_json::from_value(raw).map_err(|e| MemoryError::InvalidBank(e.to_string()))?;
    let mut items = Vec::with_capacity(doc.items.len());
    for (ordinal, value) in doc.items.into_iter().enumerate() {
        let item: MemoryItem =
            serde_json::from_value(value).map_err(|e| MemoryError::InvalidItem { ordinal, message: e.to_string() })?;
        items.push(item);
    }
    Ok((doc.ego_state, items))
}

fn validate_item(ordinal: usize, item: &MemoryItem) -> Result<(), MemoryError> {
    if item.id.trim().is_empty() {
        return Err(MemoryError::InvalidItem { ordinal, message: "field `id` is empty".into() });
    }
    if item.context.trim().is_empty() {
        return Err(MemoryError::InvalidItem { ordinal, message: "field `context` is empty".into() });
    }
    Ok(())
}

/// Read a bank file without indexing it.
pub fn read_bank(path: &Path) -> Result<MemoryBank, MemoryError> {
    let text = fs::read_to_string(path).map_err(|source| MemoryError::Io { path: path.display().to_string(), source })?;
    MemoryBank::from_json(&text)
}

/// Read a bank file and rebuild its index with `embed`.
pub fn load_bank(path: &Path, embed: &dyn Embedder) -> Result<MemoryBank, MemoryError> {
    let mut bank = read_bank(path)?;
    bank.build_index(embed)?;
    Ok(bank)
}

pub fn save_bank(bank: &MemoryBank, path: &Path) -> Result<(), MemoryError> {
    fs::write(path, bank.to_json()).map_err(|source| MemoryError::Io { path: path.display().to_string(), source })
}

/// Ordinal pairs of items sharing an id, for reporting. Does not stop at the first.
pub fn duplicate_ids(items: &[MemoryItem]) -> Vec<(String, usize, usize)> {
    let mut first_seen: HashMap<&str, usize> = HashMap::new();
    let mut out = Vec::new();
    for (i, item) in items.iter().enumerate() {
        match first_seen.get(item.id.as_str()) {
            Some(&first) => out.push((item.id.clone(), first, i)),
            None => {
                first_seen.insert(item.id.as_str(), i);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::scripted::hash_bag_embedding;

    fn embed(text: &str) -> Result<EmbeddingVector, GatewayError> {
        hash_bag_embedding(text, 256)
    }

    fn v(values: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(values.to_vec()).unwrap()
    }

    pub(crate) fn item(id: &str, context: &str) -> MemoryItem {
        MemoryItem {
            id: id.into(),
            context: context.into(),
            reaction: format!("reaction for {id}"),
            emotions: vec!["calm".into()],
            tone: "level".into(),
        }
    }

    fn sample_bank() -> MemoryBank {
        let mut bank = MemoryBank::from_items(
            EgoState::Adult,
            vec![
                item("a", "missed the quarterly deadline"),
                item("b", "manager asks where the report is"),
                item("c", "team celebrates a launch"),
            ],
        )
        .unwrap();
        bank.build_index(&embed).unwrap();
        bank
    }

    #[test]
    fn cosine_examples() {
        let x = v(&[0.3, -2.0, 5.0]);
        assert!((cosine_similarity(&x, &x).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        let expected = 32.0 / (14f64.sqrt() * 77f64.sqrt());
        let got = cosine_similarity(&v(&[1.0, 2.0, 3.0]), &v(&[4.0, 5.0, 6.0])).unwrap();
        assert!((got - 0.9746318).abs() < 1e-6);
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn cosine_errors() {
        assert!(matches!(cosine_similarity(&v(&[1.0]), &v(&[1.0, 2.0])), Err(MemoryError::DimensionMismatch(1, 2))));
        assert!(matches!(cosine_similarity(&v(&[0.0, 0.0]), &v(&[1.0, 2.0])), Err(MemoryError::ZeroNorm)));
    }

    #[test]
    fn exact_match_query_ranks_first() {
        let bank = sample_bank();
        let hits = bank.retrieve_top_k("manager asks where the report is", 1, &embed, None).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].item.id, "b");
        assert!((hits[0].score - 1.0).abs() < 1e-9);
    }

    #[test]
    fn k_larger_than_bank_returns_everything_sorted() {
        let bank = sample_bank();
        let hits = bank.retrieve_top_k("the report deadline", 10, &embed, None).unwrap();
        assert_eq!(hits.len(), 3);
        assert!(hits.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn ties_break_on_ascending_id() {
        let mut bank = MemoryBank::from_items(
            EgoState::Child,
            vec![item("z", "same text"), item("m", "same text"), item("a", "same text")],
        )
        .unwrap();
        bank.build_index(&embed).unwrap();
        let ids: Vec<_> = bank.retrieve_top_k("same text", 3, &embed, None).unwrap().into_iter().map(|r| r.item.id).collect();
        assert_eq!(ids, ["a", "m", "z"]);
        let ids: Vec<_> = bank.retrieve_top_k("same text", 2, &embed, None).unwrap().into_iter().map(|r| r.item.id).collect();
        assert_eq!(ids, ["a", "m"]);
    }

    #[test]
    fn unindexed_and_empty_banks() {
        let bank = MemoryBank::from_items(EgoState::Parent, vec![item("a", "x")]).unwrap();
        assert!(matches!(bank.retrieve_top_k("x", 1, &embed, None), Err(MemoryError::Unindexed)));
        let mut empty = MemoryBank::new(EgoState::Parent);
        empty.build_index(&embed).unwrap();
        assert!(empty.retrieve_top_k("x", 1, &embed, None).unwrap().is_empty());
        assert!(matches!(empty.retrieve_top_k("x", 0, &embed, None), Err(MemoryError::ZeroK)));
    }

    #[test]
    fn min_score_filters() {
        let bank = sample_bank();
        let hits = bank.retrieve_top_k("manager asks where the report is", 3, &embed, Some(0.99)).unwrap();
        assert_eq!(hits.len(), 1);
    }

    #[test]
    fn add_memory_behaviour() {
        let mut bank = MemoryBank::new(EgoState::Adult);
        bank.add_memory(item("n1", "a brand new memory"), &embed).unwrap();
        assert_eq!(bank.len(), 1);
        let hits = bank.retrieve_top_k("a brand new memory", 1, &embed, None).unwrap();
        assert_eq!(hits[0].item.id, "n1");
        let err = bank.add_memory(item("n1", "other"), &embed).unwrap_err();
        assert!(matches!(err, MemoryError::DuplicateId { first: 0, second: 1, .. }));
    }

    #[test]
    fn missing_field_names_field_and_ordinal() {
        let doc = r#"{"ego_state":"parent","items":[
            {"id":"a","context":"c","reaction":"r","emotions":[],"tone":"t"},
            {"id":"b","reaction":"r","emotions":[],"tone":"t"}]}"#;
        let err = MemoryBank::from_json(doc).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("item 1") && msg.contains("context"), "{msg}");
    }

    #[test]
    fn strict_parsing() {
        let extra = r#"{"ego_state":"adult","items":[{"id":"a","context":"c","reaction":"r","emotions":[],"tone":"t","mood":"x"}]}"#;
        assert!(MemoryBank::from_json(extra).is_err());
        let top = r#"{"ego_state":"adult","items":[],"version":2}"#;
        assert!(MemoryBank::from_json(top).is_err());
        let label = r#"{"ego_state":"nurturing_parent","items":[]}"#;
        let err = MemoryBank::from_json(label).unwrap_err().to_string();
        assert!(err.contains("nurturing_parent"), "{err}");
    }

    #[test]
    fn duplicate_ids_lists_all_pairs() {
        let items = vec![item("a", "x"), item("b", "y"), item("a", "z"), item("b", "w")];
        assert_eq!(duplicate_ids(&items), vec![("a".to_string(), 0, 2), ("b".to_string(), 1, 3)]);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.json");
        let bank = MemoryBank::from_items(EgoState::Child, (0..5).map(|i| item(&format!("m{i}"), &format!("context {i}"))).collect()).unwrap();
        save_bank(&bank, &path).unwrap();
        let loaded = load_bank(&path, &embed).unwrap();
        assert!(loaded.is_indexed());
        assert_eq!(loaded.ego_state(), EgoState::Child);
        assert_eq!(loaded.items(), bank.items());
    }
}
