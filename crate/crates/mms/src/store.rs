//! Persistent memory store with exact top-k cosine search.
//!
//! The store keeps every [`LongTermRecord`], the embedded views of its
//! retrieval unit, and its contextual unit. Reads take `&self` and writes
//! take `&mut self`, so sharing one store behind an `RwLock` gives the
//! many-readers-or-one-writer contract.
//!
//! On disk a store is a directory with three files:
//!
//! ```text
//! config.json    {"version": "mms-store/1", "embedding_strategy", "retrieval_comp", "contextual_comp", "dim"}
//! records.jsonl  one LongTermRecord per line, ordered by record_id
//! index.json     {"version", "dim", "entries": [{"record_id", "view_label", "vector"}]}
//! ```
//!
//! Vectors are base64-encoded little-endian `f32`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{cosine, Embedder, EmbeddingVector};
use crate::error::{MmsError, Result};
use crate::extraction::with_jobs;
use crate::model::{
    compose_contextual_unit, compose_retrieval_unit, read_records_jsonl, record_id_for,
    write_records_jsonl, ContextualUnit, LongTermRecord, RetrievalUnit, UnitComposition,
};

pub const STORE_VERSION: &str = "mms-store/1";
pub const CONFIG_FILE: &str = "config.json";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const INDEX_FILE: &str = "index.json";

/// Label of the single index entry written under [`EmbeddingStrategy::UnitConcat`].
pub const UNIT_VIEW_LABEL: &str = "unit";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingStrategy {
    /// One vector per retrieval unit, embedded from its labeled blocks.
    #[default]
    UnitConcat,
    /// One vector per block of the retrieval unit; a record scores the max over its blocks.
    FragmentMulti,
}

impl fmt::Display for EmbeddingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmbeddingStrategy::UnitConcat => "unit-concat",
            EmbeddingStrategy::FragmentMulti => "fragment-multi",
        })
    }
}

impl FromStr for EmbeddingStrategy {
    type Err = MmsError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit-concat" => Ok(Self::UnitConcat),
            "fragment-multi" => Ok(Self::FragmentMulti),
            other => Err(MmsError::InvalidArgument(format!(
                "unknown embedding strategy {other:?} (expected unit-concat or fragment-multi)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreConfig {
    pub embedding_strategy: EmbeddingStrategy,
    pub retrieval_comp: UnitComposition,
    pub contextual_comp: UnitComposition,
    pub dim: usize,
}

impl StoreConfig {
    pub fn new(dim: usize) -> Self {
        Self {
            embedding_strategy: EmbeddingStrategy::UnitConcat,
            retrieval_comp: UnitComposition::RETRIEVAL,
            contextual_comp: UnitComposition::CONTEXTUAL,
            dim,
        }
    }

    pub fn with_strategy(mut self, strategy: EmbeddingStrategy) -> Self {
        self.embedding_strategy = strategy;
        self
    }

    pub fn with_compositions(
        mut self,
        retrieval: UnitComposition,
        contextual: UnitComposition,
    ) -> Self {
        self.retrieval_comp = retrieval;
        self.contextual_comp = contextual;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.retrieval_comp.validate()?;
        self.contextual_comp.validate()?;
        if self.dim == 0 {
            return Err(MmsError::InvalidArgument(
                "store dimension must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredRecord {
    pub record_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommitOutcome {
    Inserted,
    /// The identical record was already present.
    Unchanged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryStore {
    config: StoreConfig,
    records: BTreeMap<String, LongTermRecord>,
    /// record_id -> (view label, vector), views in canonical block order.
    index: BTreeMap<String, Vec<(String, EmbeddingVector)>>,
    contextual_units: BTreeMap<String, ContextualUnit>,
}

impl MemoryStore {
    pub fn new(config: StoreConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            records: BTreeMap::new(),
            index: BTreeMap::new(),
            contextual_units: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn record(&self, record_id: &str) -> Option<&LongTermRecord> {
        self.records.get(record_id)
    }

    /// Records in ascending `record_id` order.
    pub fn records(&self) -> impl Iterator<Item = &LongTermRecord> {
        self.records.values()
    }

    pub fn contextual_unit(&self, record_id: &str) -> Option<&ContextualUnit> {
        self.contextual_units.get(record_id)
    }

    pub fn contextual_units(&self) -> impl Iterator<Item = &ContextualUnit> {
        self.contextual_units.values()
    }

    pub fn retrieval_unit(&self, record_id: &str) -> Result<RetrievalUnit> {
        let record = self
            .records
            .get(record_id)
            .ok_or_else(|| MmsError::MissingRecord(record_id.to_string()))?;
        compose_retrieval_unit(record, &self.config.retrieval_comp)
    }

    /// Flattened `(record_id, view_label, vector)` index entries.
    pub fn index_entries(&self) -> impl Iterator<Item = (&str, &str, &EmbeddingVector)> {
        self.index.iter().flat_map(|(id, views)| {
            views
                .iter()
                .map(move |(label, v)| (id.as_str(), label.as_str(), v))
        })
    }

    /// The texts that get embedded for one record, with their view labels.
    pub fn embedding_inputs(&self, record: &LongTermRecord) -> Result<Vec<(String, String)>> {
        let unit = compose_retrieval_unit(record, &self.config.retrieval_comp)?;
        Ok(match self.config.embedding_strategy {
            EmbeddingStrategy::UnitConcat => vec![(UNIT_VIEW_LABEL.to_string(), unit.render())],
            EmbeddingStrategy::FragmentMulti => unit
                .text_views
                .into_iter()
                .map(|v| (v.block.short_name().to_string(), v.text))
                .collect(),
        })
    }

    fn check_embedder(&self, embedder: &dyn Embedder) -> Result<()> {
        if embedder.dim() != self.config.dim {
            return Err(MmsError::Dimension {
                expected: self.config.dim,
                actual: embedder.dim(),
            });
        }
        Ok(())
    }

    fn embed_record(
        &self,
        record: &LongTermRecord,
        embedder: &dyn Embedder,
    ) -> Result<Vec<(String, EmbeddingVector)>> {
        let inputs = self.embedding_inputs(record)?;
        let texts: Vec<&str> = inputs.iter().map(|(_, t)| t.as_str()).collect();
        let vectors = embedder.embed_batch(&texts)?;
        inputs
            .into_iter()
            .zip(vectors)
            .map(|((label, _), v)| {
                v.ensure_dim(self.config.dim)?;
                Ok((label, v))
            })
            .collect()
    }

    /// Returns `Some(Unchanged)` for an identical re-commit, `None` for a new record.
    fn precheck(&self, record: &LongTermRecord) -> Result<Option<CommitOutcome>> {
        let expected_id = record_id_for(&record.source.session_id, &record.source.round_id);
        if record.record_id != expected_id {
            return Err(MmsError::InvalidArgument(format!(
                "record id {} does not match its source (expected {expected_id})",
                record.record_id
            )));
        }
        match self.records.get(&record.record_id) {
            Some(existing) if existing == record => Ok(Some(CommitOutcome::Unchanged)),
            Some(_) => Err(MmsError::Conflict {
                record_id: record.record_id.clone(),
            }),
            None => Ok(None),
        }
    }

    fn insert(
        &mut self,
        record: LongTermRecord,
        views: Vec<(String, EmbeddingVector)>,
    ) -> Result<()> {
        let unit = compose_contextual_unit(&record, &self.config.contextual_comp)?;
        let id = record.record_id.clone();
        self.index.insert(id.clone(), views);
        self.contextual_units.insert(id.clone(), unit);
        self.records.insert(id, record);
        Ok(())
    }

    pub fn commit_record(
        &mut self,
        record: LongTermRecord,
        embedder: &dyn Embedder,
    ) -> Result<CommitOutcome> {
        self.check_embedder(embedder)?;
        record.source.validate()?;
        if let Some(outcome) = self.precheck(&record)? {
            return Ok(outcome);
        }
        let views = self.embed_record(&record, embedder)?;
        self.insert(record, views)?;
        Ok(CommitOutcome::Inserted)
    }

    /// Commit many records, embedding `jobs` at a time. Insertion happens in
    /// input order after all embeddings succeed.
    pub fn commit_records(
        &mut self,
        records: Vec<LongTermRecord>,
        embedder: &dyn Embedder,
        jobs: usize,
    ) -> Result<Vec<CommitOutcome>> {
        self.check_embedder(embedder)?;
        let mut pending = BTreeMap::new();
        let mut outcomes = Vec::with_capacity(records.len());
        for record in &records {
            record.source.validate()?;
            match (self.precheck(record)?, pending.get(&record.record_id)) {
                (Some(outcome), _) => outcomes.push(outcome),
                (None, Some(seen)) if *seen == record => outcomes.push(CommitOutcome::Unchanged),
                (None, Some(_)) => {
                    return Err(MmsError::Conflict {
                        record_id: record.record_id.clone(),
                    })
                }
                (None, None) => {
                    pending.insert(record.record_id.clone(), record);
                    outcomes.push(CommitOutcome::Inserted);
                }
            }
        }
        let todo: Vec<&LongTermRecord> = pending.into_values().collect();
        let embedded = with_jobs(jobs, || {
            todo.par_iter()
                .map(|r| self.embed_record(r, embedder))
                .collect::<Result<Vec<_>>>()
        })?;
        let todo: Vec<LongTermRecord> = todo.into_iter().cloned().collect();
        for (record, views) in todo.into_iter().zip(embedded) {
            self.insert(record, views)?;
        }
        Ok(outcomes)
    }

    /// Exact scan. Records score the max over their views; results are
    /// sorted by score descending, ties by ascending record_id.
    pub fn top_k(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<ScoredRecord>> {
        if k == 0 {
            return Err(MmsError::InvalidArgument("k must be at least 1".into()));
        }
        query.ensure_dim(self.config.dim)?;
        let q = query.values();
        let mut scored: Vec<(f64, &str)> = self
            .index
            .iter()
            .map(|(id, views)| {
                let best = views
                    .iter()
                    .map(|(_, v)| cosine(q, v.values()).value)
                    .fold(f64::NEG_INFINITY, f64::max);
                (best, id.as_str())
            })
            .collect();
        let order =
            |a: &(f64, &str), b: &(f64, &str)| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1));
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_unstable_by(order);
        Ok(scored
            .into_iter()
            .map(|(score, id)| ScoredRecord {
                record_id: id.to_string(),
                score,
            })
            .collect())
    }

    /// Contextual units for `ids`, in the same order.
    pub fn fetch_contextual<S: AsRef<str>>(&self, ids: &[S]) -> Result<Vec<ContextualUnit>> {
        ids.iter()
            .map(|id| {
                self.contextual_units
                    .get(id.as_ref())
                    .cloned()
                    .ok_or_else(|| MmsError::MissingRecord(id.as_ref().to_string()))
            })
            .collect()
    }

    /// Verify the pairing and index invariants.
    pub fn check_invariants(&self) -> Result<()> {
        let broken = |msg: String| Err(MmsError::InvalidArgument(msg));
        if !self.records.keys().eq(self.contextual_units.keys()) {
            return broken("contextual units do not pair one-to-one with records".into());
        }
        if !self.records.keys().eq(self.index.keys()) {
            return broken("index entries do not pair one-to-one with records".into());
        }
        for (id, unit) in &self.contextual_units {
            if &unit.record_id != id {
                return broken(format!(
                    "contextual unit under {id} names {}",
                    unit.record_id
                ));
            }
        }
        for (id, views) in &self.index {
            if views.is_empty() {
                return broken(format!("record {id} has no index entries"));
            }
            for (_, v) in views {
                v.ensure_dim(self.config.dim)?;
            }
        }
        Ok(())
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;

        let config = ConfigFile {
            version: STORE_VERSION.into(),
            config: self.config,
        };
        fs::write(
            dir.join(CONFIG_FILE),
            serde_json::to_string_pretty(&config)? + "\n",
        )?;

        let mut out = BufWriter::new(File::create(dir.join(RECORDS_FILE))?);
        write_records_jsonl(&mut out, self.records.values())?;
        out.flush()?;

        let entries = self
            .index_entries()
            .map(|(id, label, v)| IndexEntryFile {
                record_id: id.to_string(),
                view_label: label.to_string(),
                vector: encode_vector(v),
            })
            .collect();
        let index = IndexFile {
            version: STORE_VERSION.into(),
            dim: self.config.dim,
            entries,
        };
        fs::write(
            dir.join(INDEX_FILE),
            serde_json::to_string_pretty(&index)? + "\n",
        )?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        Self::load_inner(dir.as_ref(), None)
    }

    /// Load, failing with a dimension error unless the store was built with `dim`.
    pub fn load_expecting(dir: impl AsRef<Path>, dim: usize) -> Result<Self> {
        Self::load_inner(dir.as_ref(), Some(dim))
    }

    fn load_inner(dir: &Path, expected_dim: Option<usize>) -> Result<Self> {
        let config_path = dir.join(CONFIG_FILE);
        let text = fs::read_to_string(&config_path).map_err(|e| MmsError::load(&config_path, e))?;
        let raw: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| MmsError::load(&config_path, e))?;
        check_version(raw.get("version"))?;
        let config: ConfigFile =
            serde_json::from_value(raw).map_err(|e| MmsError::load(&config_path, e))?;
        let config = config.config;
        config
            .validate()
            .map_err(|e| MmsError::load(&config_path, e))?;
        if let Some(expected) = expected_dim {
            if expected != config.dim {
                return Err(MmsError::Dimension {
                    expected,
                    actual: config.dim,
                });
            }
        }

        let records_path = dir.join(RECORDS_FILE);
        let file = File::open(&records_path).map_err(|e| MmsError::load(&records_path, e))?;
        let records = read_records_jsonl(BufReader::new(file))
            .map_err(|e| MmsError::load(&records_path, e))?;

        let index_path = dir.join(INDEX_FILE);
        let text = fs::read_to_string(&index_path).map_err(|e| MmsError::load(&index_path, e))?;
        let raw: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| MmsError::load(&index_path, e))?;
        check_version(raw.get("version"))?;
        let index: IndexFile =
            serde_json::from_value(raw).map_err(|e| MmsError::load(&index_path, e))?;
        if index.dim != config.dim {
            return Err(MmsError::Dimension {
                expected: config.dim,
                actual: index.dim,
            });
        }

        let mut store = Self::new(config)?;
        let mut views: BTreeMap<String, Vec<(String, EmbeddingVector)>> = BTreeMap::new();
        for entry in index.entries {
            let vector = decode_vector(&entry.vector, config.dim).map_err(|e| match e {
                MmsError::Dimension { .. } => e,
                other => MmsError::load(&index_path, other),
            })?;
            views
                .entry(entry.record_id)
                .or_default()
                .push((entry.view_label, vector));
        }
        for record in records {
            if store.records.contains_key(&record.record_id) {
                return Err(MmsError::load(
                    &records_path,
                    format!("duplicate record {}", record.record_id),
                ));
            }
            store
                .precheck(&record)
                .map_err(|e| MmsError::load(&records_path, e))?;
            let record_views = views.remove(&record.record_id).ok_or_else(|| {
                MmsError::load(
                    &index_path,
                    format!("no index entries for {}", record.record_id),
                )
            })?;
            store.insert(record, record_views)?;
        }
        if let Some(orphan) = views.keys().next() {
            return Err(MmsError::load(
                &index_path,
                format!("index entry for unknown record {orphan}"),
            ));
        }
        store
            .check_invariants()
            .map_err(|e| MmsError::load(dir, e))?;
        Ok(store)
    }
}

fn check_version(found: Option<&serde_json::Value>) -> Result<()> {
    match found.and_then(|v| v.as_str()) {
        Some(STORE_VERSION) => Ok(()),
        other => Err(MmsError::Version {
            found: other.unwrap_or("<missing>").to_string(),
            expected: STORE_VERSION.into(),
        }),
    }
}

fn encode_vector(v: &EmbeddingVector) -> String {
    let bytes: Vec<u8> = v.values().iter().flat_map(|x| x.to_le_bytes()).collect();
    BASE64.encode(bytes)
}

fn decode_vector(encoded: &str, dim: usize) -> Result<EmbeddingVector> {
    let bytes = BASE64
        .decode(encoded)
        .map_err(|e| MmsError::InvalidArgument(format!("bad base64 vector: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(MmsError::InvalidArgument(format!(
            "vector byte length {} is not a multiple of 4",
            bytes.len()
        )));
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let vector = EmbeddingVector::new(values)?;
    vector.ensure_dim(dim)?;
    Ok(vector)
}

#[derive(Serialize, Deserialize)]
struct ConfigFile {
    version: String,
    #[serde(flatten)]
    config: StoreConfig,
}

#[derive(Serialize, Deserialize)]
struct IndexFile {
    version: String,
    dim: usize,
    entries: Vec<IndexEntryFile>,
}

#[derive(Serialize, Deserialize)]
struct IndexEntryFile {
    record_id: String,
    view_label: String,
    vector: String,
}
