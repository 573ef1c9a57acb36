//! Experiment runners: MMS, the NaiveRAG baseline, ablations, the top-n
//! sweep and extraction overhead.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::Embedder;
use crate::error::{MmsError, Result};
use crate::eval::metrics::{bleu1, token_f1, RetrievalJudgment};
use crate::eval::report::{EvalReport, QueryRow, RunMetadata};
use crate::extraction::{with_jobs, Extractor, UsageRecord};
use crate::generation::Answerer;
use crate::model::{Block, DialogueRound, EvalQuery, FragmentSet, LongTermRecord, UnitComposition};
use crate::retrieval::{assemble_context, retrieve, DEFAULT_TOP_K};
use crate::store::{EmbeddingStrategy, MemoryStore, StoreConfig};

/// n values of the default top-n sweep.
pub const DEFAULT_SWEEP: [usize; 5] = [1, 3, 5, 7, 9];

/// Retrieval depth used for Recall@{1,3,5} regardless of `k`.
const RECALL_DEPTH: usize = 5;

/// The models used by a run.
#[derive(Clone, Copy)]
pub struct Backends<'a> {
    pub extractor: &'a Extractor,
    pub embedder: &'a dyn Embedder,
    pub answerer: &'a Answerer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Contextual units given to the answering model.
    pub k: usize,
    /// Worker threads; 0 uses rayon's default pool.
    pub jobs: usize,
    /// Context budget in estimated tokens; `None` is unlimited.
    pub context_budget: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            k: DEFAULT_TOP_K,
            jobs: 0,
            context_budget: None,
        }
    }
}

impl RunOptions {
    pub fn with_k(self, k: usize) -> Self {
        Self { k, ..self }
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(MmsError::InvalidArgument("k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Run metadata for an evaluation over `config`.
pub fn run_metadata(
    method: &str,
    label: &str,
    config: &StoreConfig,
    backends: Backends<'_>,
    k: usize,
) -> RunMetadata {
    RunMetadata {
        method: method.to_string(),
        label: label.to_string(),
        retrieval_comp: config.retrieval_comp.to_string(),
        contextual_comp: config.contextual_comp.to_string(),
        strategy: config.embedding_strategy,
        k,
        embedder: backends.embedder.describe(),
        extractor: backends.extractor.backend().describe(),
        chat: backends.answerer.describe(),
    }
}

/// Answer and score every query against `store`. Queries run in parallel;
/// rows come back in input order.
pub fn evaluate_store(
    store: &MemoryStore,
    queries: &[EvalQuery],
    backends: Backends<'_>,
    opts: RunOptions,
    metadata: RunMetadata,
) -> Result<EvalReport> {
    opts.validate()?;
    let rows = with_jobs(opts.jobs, || {
        queries
            .par_iter()
            .map(|q| evaluate_query(store, q, backends, opts))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(EvalReport::from_rows(metadata, rows))
}

fn evaluate_query(
    store: &MemoryStore,
    query: &EvalQuery,
    backends: Backends<'_>,
    opts: RunOptions,
) -> Result<QueryRow> {
    let depth = opts.k.max(RECALL_DEPTH);
    let hits = retrieve(store, &query.question, depth, backends.embedder)?;
    let gold_records: Vec<String> = store
        .records()
        .filter(|r| r.source.covers_any(&query.gold_evidence))
        .map(|r| r.record_id.clone())
        .collect();

    let in_context = &hits[..opts.k.min(hits.len())];
    let context = assemble_context(in_context, opts.context_budget);
    let answer = match backends.answerer.answer(&query.question, &context.text) {
        Ok((text, _)) => text,
        Err(MmsError::EmptyAnswer) => String::new(),
        Err(e) => return Err(e),
    };

    let judgment = RetrievalJudgment {
        query_id: query.query_id.clone(),
        topn_ids: hits.iter().map(|h| h.record_id.clone()).collect(),
        gold_hits: gold_records.iter().cloned().collect(),
    };
    let context_coverage = (!gold_records.is_empty()).then(|| {
        let found = in_context[..context.included]
            .iter()
            .filter(|h| judgment.gold_hits.contains(&h.record_id))
            .count();
        found as f64 / gold_records.len() as f64
    });

    Ok(QueryRow {
        query_id: query.query_id.clone(),
        category: query.category,
        question: query.question.clone(),
        gold_answer: query.gold_answer.clone(),
        f1: token_f1(&answer, &query.gold_answer),
        bleu1: bleu1(&answer, &query.gold_answer),
        answer,
        recall_1: judgment.recall(1),
        recall_3: judgment.recall(3),
        recall_5: judgment.recall(5),
        retrieved: judgment.topn_ids,
        gold_records,
        context_coverage,
    })
}

/// Extract long-term records for every round, ordered by round id.
pub fn extract_records(
    rounds: &[DialogueRound],
    extractor: &Extractor,
    jobs: usize,
) -> Result<Vec<LongTermRecord>> {
    Ok(extractor
        .extract_all(rounds, jobs)?
        .into_iter()
        .map(|(record, _)| record)
        .collect())
}

pub fn build_store(
    records: &[LongTermRecord],
    config: StoreConfig,
    embedder: &dyn Embedder,
    jobs: usize,
) -> Result<MemoryStore> {
    let mut store = MemoryStore::new(config)?;
    store.commit_records(records.to_vec(), embedder, jobs)?;
    Ok(store)
}

/// Build a store from already-extracted records and evaluate it.
pub fn evaluate_records(
    records: &[LongTermRecord],
    queries: &[EvalQuery],
    config: StoreConfig,
    label: &str,
    backends: Backends<'_>,
    opts: RunOptions,
) -> Result<EvalReport> {
    opts.validate()?;
    let store = build_store(records, config, backends.embedder, opts.jobs)?;
    let metadata = run_metadata("mms", label, &config, backends, opts.k);
    evaluate_store(&store, queries, backends, opts, metadata)
}

/// Full MMS pipeline: extract, build the store, answer and score.
pub fn run_mms(
    rounds: &[DialogueRound],
    queries: &[EvalQuery],
    config: StoreConfig,
    backends: Backends<'_>,
    opts: RunOptions,
) -> Result<EvalReport> {
    opts.validate()?;
    let records = extract_records(rounds, backends.extractor, opts.jobs)?;
    evaluate_records(&records, queries, config, "MMS", backends, opts)
}

/// Store layout of the baseline: only the raw round, embedded as-is.
pub fn naive_rag_config(dim: usize) -> StoreConfig {
    StoreConfig::new(dim)
        .with_strategy(EmbeddingStrategy::FragmentMulti)
        .with_compositions(UnitComposition::SHORT_ONLY, UnitComposition::SHORT_ONLY)
}

/// Records with no fragments.
pub fn naive_rag_records(rounds: &[DialogueRound]) -> Vec<LongTermRecord> {
    let mut records: Vec<_> = rounds
        .iter()
        .map(|r| LongTermRecord::new(r.clone(), FragmentSet::default()))
        .collect();
    records.sort_by(|a, b| a.source.round_id.cmp(&b.source.round_id));
    records
}

/// NaiveRAG: embed raw round text, retrieve by cosine, answer from raw rounds.
pub fn run_naive_rag(
    rounds: &[DialogueRound],
    queries: &[EvalQuery],
    embedder: &dyn Embedder,
    answerer: &Answerer,
    opts: RunOptions,
) -> Result<EvalReport> {
    opts.validate()?;
    let config = naive_rag_config(embedder.dim());
    let records = naive_rag_records(rounds);
    let store = build_store(&records, config, embedder, opts.jobs)?;
    let extractor = Extractor::deterministic();
    let backends = Backends {
        extractor: &extractor,
        embedder,
        answerer,
    };
    let mut metadata = run_metadata("naive-rag", "NaiveRAG", &config, backends, opts.k);
    metadata.extractor = "none".into();
    evaluate_store(&store, queries, backends, opts, metadata)
}

/// Which unit an ablation modifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationSide {
    Retrieval,
    Contextual,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub label: String,
    pub side: AblationSide,
    pub retrieval_comp: UnitComposition,
    pub contextual_comp: UnitComposition,
}

impl AblationConfig {
    fn retrieval(label: &str, comp: UnitComposition) -> Self {
        Self {
            label: format!("{label} (retrieval)"),
            side: AblationSide::Retrieval,
            retrieval_comp: comp,
            contextual_comp: UnitComposition::CONTEXTUAL,
        }
    }

    fn contextual(label: &str, comp: UnitComposition) -> Self {
        Self {
            label: format!("{label} (contextual)"),
            side: AblationSide::Contextual,
            retrieval_comp: UnitComposition::RETRIEVAL,
            contextual_comp: comp,
        }
    }

    pub fn store_config(&self, base: StoreConfig) -> StoreConfig {
        base.with_compositions(self.retrieval_comp, self.contextual_comp)
    }
}

/// The ten module-removal and module-addition runs.
pub fn ablation_matrix() -> Vec<AblationConfig> {
    let ret = UnitComposition::RETRIEVAL;
    let ctx = UnitComposition::CONTEXTUAL;
    vec![
        AblationConfig::retrieval("w/o Key", ret.without(Block::Keywords)),
        AblationConfig::retrieval("w/o Cog", ret.without(Block::Perspectives)),
        AblationConfig::retrieval("w/o Epi", ret.without(Block::Events)),
        AblationConfig::retrieval(
            "w/o Cog&Epi",
            ret.without(Block::Perspectives).without(Block::Events),
        ),
        AblationConfig::retrieval("MMS+Sem", ret.with(Block::Facts, true)),
        AblationConfig::contextual("w/o Key", ctx.without(Block::Keywords)),
        AblationConfig::contextual("w/o Cog", ctx.without(Block::Perspectives)),
        AblationConfig::contextual("w/o Sem", ctx.without(Block::Facts)),
        AblationConfig::contextual(
            "w/o Cog&Sem",
            ctx.without(Block::Perspectives).without(Block::Facts),
        ),
        AblationConfig::contextual("MMS+Epi", ctx.with(Block::Events, true)),
    ]
}

/// Evaluate each configuration over the same extracted records.
pub fn run_ablation(
    records: &[LongTermRecord],
    queries: &[EvalQuery],
    configs: &[AblationConfig],
    base: StoreConfig,
    backends: Backends<'_>,
    opts: RunOptions,
) -> Result<Vec<EvalReport>> {
    configs
        .iter()
        .map(|c| {
            evaluate_records(
                records,
                queries,
                c.store_config(base),
                &c.label,
                backends,
                opts,
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub f1: f64,
    pub bleu1: f64,
    /// Mean fraction of gold records that reached the answer context.
    pub gold_coverage: f64,
}

/// Evaluate `store` with `k = n` for each n. The same store serves every run.
pub fn run_topn_sweep(
    store: &MemoryStore,
    queries: &[EvalQuery],
    n_values: &[usize],
    backends: Backends<'_>,
    opts: RunOptions,
) -> Result<Vec<SweepRow>> {
    n_values
        .iter()
        .map(|&n| {
            let opts = opts.with_k(n);
            let metadata = run_metadata("mms", &format!("top-{n}"), store.config(), backends, n);
            let report = evaluate_store(store, queries, backends, opts, metadata)?;
            let coverage: Vec<f64> = report
                .rows
                .iter()
                .filter_map(|r| r.context_coverage)
                .collect();
            let gold_coverage = if coverage.is_empty() {
                0.0
            } else {
                coverage.iter().sum::<f64>() / coverage.len() as f64
            };
            Ok(SweepRow {
                n,
                f1: report.average.f1,
                bleu1: report.average.bleu1,
                gold_coverage,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverheadSummary {
    pub rounds: usize,
    /// Seconds per round.
    pub avg_latency: f64,
    /// Prompt plus completion tokens per round.
    pub avg_tokens: f64,
    pub avg_prompt_tokens: f64,
    pub avg_completion_tokens: f64,
    pub total_tokens: u64,
}

pub fn summarize_usage(usages: &[UsageRecord]) -> Result<OverheadSummary> {
    if usages.is_empty() {
        return Err(MmsError::NoSamples);
    }
    let n = usages.len() as f64;
    let prompt: u64 = usages.iter().map(|u| u.prompt_tokens).sum();
    let completion: u64 = usages.iter().map(|u| u.completion_tokens).sum();
    let latency: f64 = usages.iter().map(|u| u.wall_latency).sum();
    Ok(OverheadSummary {
        rounds: usages.len(),
        avg_latency: latency / n,
        avg_tokens: (prompt + completion) as f64 / n,
        avg_prompt_tokens: prompt as f64 / n,
        avg_completion_tokens: completion as f64 / n,
        total_tokens: prompt + completion,
    })
}

/// Extract each round in turn and average the usage. Rounds are processed
/// sequentially so latencies are not skewed by contention.
pub fn run_overhead(rounds: &[DialogueRound], extractor: &Extractor) -> Result<OverheadSummary> {
    let usages = rounds
        .iter()
        .map(|r| extractor.extract(r).map(|(_, usage)| usage))
        .collect::<Result<Vec<_>>>()?;
    summarize_usage(&usages)
}
