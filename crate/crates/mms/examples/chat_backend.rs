//! Use the extractor and answerer against an HTTP chat endpoint.
//!
//! Set `MMS_CHAT_URL` (and optionally `MMS_CHAT_KEY`) to a service that
//! accepts `{"model", "temperature", "messages"}` and replies with
//! `{"text", "usage": {"prompt_tokens", "completion_tokens"}}`. Without it the
//! example shows the requests it would send.

use std::sync::Arc;

use mms::chat::HttpChatTransport;
use mms::extraction::{Extractor, ExtractorBackend};
use mms::generation::Answerer;
use mms::model::{DialogueRound, Turn};

fn main() -> mms::error::Result<()> {
    let round = DialogueRound::new(
        "demo:r0",
        "demo",
        vec![
            Turn::new(
                "Lena",
                "I finally finished my first marathon in Berlin!",
                "t1",
            ),
            Turn::new("Omar", "Amazing, how long did it take?", "t2"),
        ],
        None,
    )?;

    let Some(http) = HttpChatTransport::from_env() else {
        let extractor = Extractor::chat(
            ExtractorBackend::chat_model("gpt-4o-mini"),
            Arc::new(mms::chat::EchoChat),
        )?;
        let request = extractor.render_request(&round)?;
        println!("MMS_CHAT_URL is not set; extraction request would be:\n");
        println!(
            "{}",
            serde_json::to_string_pretty(&request).expect("serializable")
        );
        return Ok(());
    };

    let transport = Arc::new(http);
    let extractor = Extractor::chat(
        ExtractorBackend::chat_model("gpt-4o-mini"),
        transport.clone(),
    )?;
    let (fragments, usage) = extractor.extract(&round)?;
    println!(
        "{fragments:#?}\n{} tokens in {:.2}s",
        usage.total_tokens(),
        usage.wall_latency
    );

    let answerer = Answerer::new(transport).with_model("gpt-4o-mini");
    let (answer, _) = answerer.answer("Where did Lena run her marathon?", &round.short_text())?;
    println!("answer: {answer}");
    Ok(())
}
