//! Run the ten-configuration fragment ablation over one set of extracted records.

use std::path::PathBuf;
use std::sync::Arc;

use mms::chat::ExtractiveChat;
use mms::embedding::HashEmbedder;
use mms::eval::locomo::load_locomo;
use mms::eval::runner::{
    ablation_matrix, evaluate_records, extract_records, run_ablation, Backends, RunOptions,
};
use mms::extraction::Extractor;
use mms::generation::Answerer;
use mms::model::DEFAULT_ROUND_WINDOW;
use mms::store::StoreConfig;

fn main() -> mms::error::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/desk.json");
    let corpus = load_locomo(path, DEFAULT_ROUND_WINDOW)?;
    let extractor = Extractor::deterministic();
    let embedder = HashEmbedder::new(256)?;
    let answerer = Answerer::new(Arc::new(ExtractiveChat));
    let backends = Backends {
        extractor: &extractor,
        embedder: &embedder,
        answerer: &answerer,
    };
    let opts = RunOptions::default();
    let base = StoreConfig::new(256);

    let records = extract_records(&corpus.rounds, &extractor, 0)?;
    let mut reports = vec![evaluate_records(
        &records,
        &corpus.queries,
        base,
        "MMS",
        backends,
        opts,
    )?];
    reports.extend(run_ablation(
        &records,
        &corpus.queries,
        &ablation_matrix(),
        base,
        backends,
        opts,
    )?);

    println!(
        "{:<28} {:<22} {:<22} {:>6} {:>6} {:>6} {:>6}",
        "config", "retrieval", "contextual", "R@1", "R@3", "R@5", "F1"
    );
    for r in &reports {
        let a = &r.average;
        println!(
            "{:<28} {:<22} {:<22} {:>6.2} {:>6.2} {:>6.2} {:>6.2}",
            r.metadata.label,
            r.metadata.retrieval_comp,
            r.metadata.contextual_comp,
            100.0 * a.recall_1,
            100.0 * a.recall_3,
            100.0 * a.recall_5,
            100.0 * a.f1
        );
    }
    Ok(())
}
