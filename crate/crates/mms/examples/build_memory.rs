//! Turn one dialogue round into a long-term record and show its paired units.

use mms::embedding::HashEmbedder;
use mms::extraction::Extractor;
use mms::model::{DialogueRound, LongTermRecord, Turn};
use mms::store::{MemoryStore, StoreConfig};

fn main() -> mms::error::Result<()> {
    let round = DialogueRound::new(
        "demo:r0",
        "demo",
        vec![
            Turn::new("Maya", "I adopted a dog named Rex last Saturday.", "t1"),
            Turn::new("Jonas", "Congratulations! What breed is Rex?", "t2"),
            Turn::new(
                "Maya",
                "He is a beagle and my sister helped me pick him.",
                "t3",
            ),
        ],
        Some("2023-05-08T14:10:00".into()),
    )?;

    let (fragments, _) = Extractor::deterministic().extract(&round)?;
    let record = LongTermRecord::new(round, fragments);
    println!("record {}", record.record_id);

    let embedder = HashEmbedder::new(256)?;
    let mut store = MemoryStore::new(StoreConfig::new(256))?;
    store.commit_record(record.clone(), &embedder)?;

    println!(
        "\n== retrieval unit ==\n{}",
        store.retrieval_unit(&record.record_id)?.render()
    );
    let unit = store
        .contextual_unit(&record.record_id)
        .expect("paired unit");
    println!("\n== contextual unit ==\n{}", unit.render());
    Ok(())
}
