//! Query path: embed the question, match retrieval units, hand back the
//! paired contextual units, and assemble them into a prompt context.

use serde::{Deserialize, Serialize};

use crate::embedding::Embedder;
use crate::error::Result;
use crate::model::ContextualUnit;
use crate::store::MemoryStore;

/// Contextual units handed to the answering model by default.
pub const DEFAULT_TOP_K: usize = 5;

const UNIT_SEPARATOR: &str = "\n\n---\n\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedMemory {
    pub record_id: String,
    pub score: f64,
    pub unit: ContextualUnit,
}

pub fn retrieve(
    store: &MemoryStore,
    question: &str,
    k: usize,
    embedder: &dyn Embedder,
) -> Result<Vec<RetrievedMemory>> {
    let query = embedder.embed(question)?;
    let hits = store.top_k(&query, k)?;
    let ids: Vec<&str> = hits.iter().map(|h| h.record_id.as_str()).collect();
    let units = store.fetch_contextual(&ids)?;
    Ok(hits
        .into_iter()
        .zip(units)
        .map(|(hit, unit)| RetrievedMemory {
            record_id: hit.record_id,
            score: hit.score,
            unit,
        })
        .collect())
}

/// Rough token estimate: a quarter of the character count, rounded up.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssembledContext {
    pub text: String,
    /// Number of leading memories that made it in.
    pub included: usize,
    /// Some memories were dropped to respect the budget.
    pub truncated: bool,
    /// The first memory alone exceeds the budget; it was kept anyway.
    pub over_budget: bool,
}

/// Render one memory with its rank header.
pub fn render_memory(rank: usize, memory: &RetrievedMemory) -> String {
    format!(
        "MEMORY {rank} (score={:.4}, id={}):\n{}",
        memory.score,
        memory.record_id,
        memory.unit.render()
    )
}

/// Concatenate memories in rank order. Whole memories are dropped from the
/// tail once the estimated size would exceed `budget` tokens; the first
/// memory is always kept. `None` means no budget.
pub fn assemble_context(memories: &[RetrievedMemory], budget: Option<usize>) -> AssembledContext {
    let mut text = String::new();
    let mut included = 0;
    let mut over_budget = false;
    for (idx, memory) in memories.iter().enumerate() {
        let block = render_memory(idx + 1, memory);
        let candidate = if text.is_empty() {
            block
        } else {
            format!("{text}{UNIT_SEPARATOR}{block}")
        };
        if let Some(limit) = budget {
            let size = estimate_tokens(&candidate);
            if size > limit {
                if idx > 0 {
                    break;
                }
                log::warn!("first memory ({size} tokens) exceeds the context budget of {limit}; keeping it");
                over_budget = true;
            }
        }
        text = candidate;
        included += 1;
    }
    AssembledContext {
        text,
        included,
        truncated: included < memories.len(),
        over_budget,
    }
}
