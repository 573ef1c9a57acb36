//! Build a store from the bundled fixture and list the top memories for a question.

use std::path::PathBuf;

use mms::embedding::HashEmbedder;
use mms::eval::locomo::load_locomo;
use mms::eval::runner::{build_store, extract_records};
use mms::extraction::Extractor;
use mms::model::DEFAULT_ROUND_WINDOW;
use mms::retrieval::retrieve;
use mms::store::StoreConfig;

fn main() -> mms::error::Result<()> {
    let question = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "Where did Maya travel?".into());
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/desk.json");
    let corpus = load_locomo(path, DEFAULT_ROUND_WINDOW)?;

    let records = extract_records(&corpus.rounds, &Extractor::deterministic(), 0)?;
    let embedder = HashEmbedder::new(256)?;
    let store = build_store(&records, StoreConfig::new(256), &embedder, 0)?;

    println!("{} memories, question: {question}", store.len());
    for (rank, hit) in retrieve(&store, &question, 5, &embedder)?
        .iter()
        .enumerate()
    {
        let round = &store.record(&hit.record_id).expect("stored").source;
        println!(
            "{:>2}  {:.4}  {}  {}",
            rank + 1,
            hit.score,
            round.round_id,
            round.short_text().lines().next().unwrap_or("")
        );
    }
    Ok(())
}
