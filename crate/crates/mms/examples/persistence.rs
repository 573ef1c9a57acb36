//! Save a store to disk, reload it and query the copy.

use std::path::PathBuf;

use mms::embedding::HashEmbedder;
use mms::eval::locomo::load_locomo;
use mms::eval::runner::{build_store, extract_records};
use mms::extraction::Extractor;
use mms::model::DEFAULT_ROUND_WINDOW;
use mms::retrieval::retrieve;
use mms::store::{MemoryStore, StoreConfig};

fn main() -> mms::error::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/desk.json");
    let corpus = load_locomo(path, DEFAULT_ROUND_WINDOW)?;
    let embedder = HashEmbedder::new(128)?;
    let records = extract_records(&corpus.rounds, &Extractor::deterministic(), 0)?;
    let store = build_store(&records, StoreConfig::new(128), &embedder, 0)?;

    let dir = std::env::temp_dir().join(format!("mms-persistence-{}", std::process::id()));
    store.save(&dir)?;
    for entry in std::fs::read_dir(&dir)? {
        let entry = entry?;
        println!(
            "{:>8} bytes  {}",
            entry.metadata()?.len(),
            entry.file_name().to_string_lossy()
        );
    }

    let reloaded = MemoryStore::load_expecting(&dir, 128)?;
    assert_eq!(reloaded, store);
    let top = retrieve(
        &reloaded,
        "What instrument is Priya learning?",
        1,
        &embedder,
    )?;
    println!(
        "top hit after reload: {} ({:.4})",
        top[0].record_id, top[0].score
    );
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
