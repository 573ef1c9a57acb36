#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;

use mms::embedding::{Embedder, EmbeddingVector};
use mms::error::{MmsError, Result};
use mms::model::{DialogueRound, FragmentSet, LongTermRecord, Turn};
use mms::store::{MemoryStore, StoreConfig};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(rel)
}

/// Returns a preset vector for each known input text.
pub struct TableEmbedder {
    pub dim: usize,
    pub table: HashMap<String, EmbeddingVector>,
}

impl Embedder for TableEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        self.table
            .get(text)
            .cloned()
            .ok_or_else(|| MmsError::InvalidArgument(format!("no vector for {text:?}")))
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn describe(&self) -> String {
        format!("table/{}", self.dim)
    }
}

pub fn record(idx: usize) -> LongTermRecord {
    let round = DialogueRound::new(
        format!("s:r{idx:05}"),
        "s",
        vec![Turn::new("A", format!("item {idx}"), format!("t{idx}"))],
        None,
    )
    .unwrap();
    LongTermRecord::new(round, FragmentSet::default())
}

/// A store whose record `i` is indexed under exactly `vectors[i]`.
pub fn store_with_vectors(vectors: &[Vec<f32>], jobs: usize) -> MemoryStore {
    let dim = vectors.first().map_or(1, Vec::len);
    let mut store = MemoryStore::new(StoreConfig::new(dim)).unwrap();
    let records: Vec<_> = (0..vectors.len()).map(record).collect();
    let mut table = HashMap::new();
    for (rec, v) in records.iter().zip(vectors) {
        for (_, text) in store.embedding_inputs(rec).unwrap() {
            table.insert(text, EmbeddingVector::new(v.clone()).unwrap());
        }
    }
    store
        .commit_records(records, &TableEmbedder { dim, table }, jobs)
        .unwrap();
    store
}

/// Full-scan reference: score every record, sort by score descending then id.
pub fn oracle_top_k(store: &MemoryStore, query: &[f32], k: usize) -> Vec<(String, f64)> {
    let mut best: HashMap<&str, f64> = HashMap::new();
    for (id, _, v) in store.index_entries() {
        let score = reference_cosine(query, v.values());
        let slot = best.entry(id).or_insert(f64::NEG_INFINITY);
        if score > *slot {
            *slot = score;
        }
    }
    let mut all: Vec<(String, f64)> = best
        .into_iter()
        .map(|(id, s)| (id.to_string(), s))
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

/// Plain f64 cosine, 0 for a zero vector, clamped to [-1, 1].
pub fn reference_cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    let na: f64 = a.iter().map(|x| *x as f64 * *x as f64).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| *x as f64 * *x as f64).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0) + 0.0
    }
}
