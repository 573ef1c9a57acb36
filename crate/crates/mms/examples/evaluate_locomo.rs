//! Compare MMS against the NaiveRAG baseline on a LoCoMo-format file.
//!
//! Usage: `cargo run --example evaluate_locomo [path/to/locomo.json]`

use std::path::PathBuf;
use std::sync::Arc;

use mms::chat::ExtractiveChat;
use mms::embedding::HashEmbedder;
use mms::eval::locomo::load_locomo;
use mms::eval::runner::{run_mms, run_naive_rag, Backends, RunOptions};
use mms::extraction::Extractor;
use mms::generation::Answerer;
use mms::model::DEFAULT_ROUND_WINDOW;
use mms::store::StoreConfig;

fn main() -> mms::error::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/desk.json"));
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

    let naive = run_naive_rag(&corpus.rounds, &corpus.queries, &embedder, &answerer, opts)?;
    let mms = run_mms(
        &corpus.rounds,
        &corpus.queries,
        StoreConfig::new(256),
        backends,
        opts,
    )?;
    for report in [&naive, &mms] {
        println!("{}", report.to_table());
    }
    Ok(())
}
