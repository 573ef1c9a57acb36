//! Measure per-round extraction cost.
//!
//! With `MMS_CHAT_URL` set this calls the real endpoint; otherwise a fixed
//! mock reply reporting 500 prompt and 244 completion tokens is used.

use std::path::PathBuf;
use std::sync::Arc;

use mms::chat::{ChatTransport, FixedChat, HttpChatTransport, TokenUsage};
use mms::eval::locomo::load_locomo;
use mms::eval::runner::run_overhead;
use mms::extraction::{Extractor, ExtractorBackend};
use mms::model::DEFAULT_ROUND_WINDOW;

const MOCK_REPLY: &str =
    r#"{"keywords":["rex"],"perspectives":["a","b","c"],"events":["e"],"facts":["f"]}"#;

fn main() -> mms::error::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/desk.json");
    let corpus = load_locomo(path, DEFAULT_ROUND_WINDOW)?;

    let transport: Arc<dyn ChatTransport> = match HttpChatTransport::from_env() {
        Some(http) => Arc::new(http),
        None => Arc::new(FixedChat::new(
            MOCK_REPLY,
            TokenUsage {
                prompt_tokens: 500,
                completion_tokens: 244,
            },
        )),
    };
    let extractor = Extractor::chat(ExtractorBackend::chat_model("gpt-4o-mini"), transport)?;
    let summary = run_overhead(&corpus.rounds[..10], &extractor)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&summary).expect("serializable")
    );
    Ok(())
}
