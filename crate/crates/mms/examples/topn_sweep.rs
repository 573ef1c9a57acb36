//! Vary how many contextual units reach the answer prompt.

use std::path::PathBuf;
use std::sync::Arc;

use mms::chat::ExtractiveChat;
use mms::embedding::HashEmbedder;
use mms::eval::locomo::load_locomo;
use mms::eval::runner::{
    build_store, extract_records, run_topn_sweep, Backends, RunOptions, DEFAULT_SWEEP,
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

    let records = extract_records(&corpus.rounds, &extractor, 0)?;
    let store = build_store(&records, StoreConfig::new(256), &embedder, 0)?;
    let rows = run_topn_sweep(
        &store,
        &corpus.queries,
        &DEFAULT_SWEEP,
        backends,
        RunOptions::default(),
    )?;

    println!("{:>3} {:>8} {:>8} {:>10}", "n", "F1", "BLEU-1", "coverage");
    for row in rows {
        println!(
            "{:>3} {:>8.2} {:>8.2} {:>10.3}",
            row.n,
            100.0 * row.f1,
            100.0 * row.bleu1,
            row.gold_coverage
        );
    }
    Ok(())
}
