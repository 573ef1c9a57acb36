//! Metrics, LoCoMo loading and the experiment runners.

pub mod locomo;
pub mod metrics;
pub mod report;
pub mod runner;

pub use locomo::{load_locomo, parse_locomo, LocomoCorpus};
pub use metrics::{bleu1, recall_at_n, token_f1, RetrievalJudgment};
pub use report::{EvalReport, QueryRow, RunMetadata, ScoreSummary, REPORT_SCHEMA};
pub use runner::{
    ablation_matrix, evaluate_store, run_ablation, run_mms, run_naive_rag, run_overhead,
    run_topn_sweep, summarize_usage, AblationConfig, AblationSide, Backends, OverheadSummary,
    RunOptions, SweepRow, DEFAULT_SWEEP,
};
