//! Retrieve, assemble a context and answer with the offline extractive backend.

use std::path::PathBuf;
use std::sync::Arc;

use mms::chat::ExtractiveChat;
use mms::embedding::HashEmbedder;
use mms::eval::locomo::load_locomo;
use mms::eval::runner::{build_store, extract_records};
use mms::extraction::Extractor;
use mms::generation::Answerer;
use mms::model::DEFAULT_ROUND_WINDOW;
use mms::retrieval::{assemble_context, retrieve};
use mms::store::StoreConfig;

fn main() -> mms::error::Result<()> {
    let question = "What is the name of Maya's new pet?";
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/desk.json");
    let corpus = load_locomo(path, DEFAULT_ROUND_WINDOW)?;
    let records = extract_records(&corpus.rounds, &Extractor::deterministic(), 0)?;
    let embedder = HashEmbedder::new(256)?;
    let store = build_store(&records, StoreConfig::new(256), &embedder, 0)?;

    let memories = retrieve(&store, question, 3, &embedder)?;
    let context = assemble_context(&memories, Some(600));
    println!("{}\n", context.text);
    println!(
        "({} of {} memories fit the budget)",
        context.included,
        memories.len()
    );

    let answerer = Answerer::new(Arc::new(ExtractiveChat));
    let (answer, _) = answerer.answer(question, &context.text)?;
    println!("Q: {question}\nA: {answer}");
    Ok(())
}
