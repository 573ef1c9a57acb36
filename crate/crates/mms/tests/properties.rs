mod common;

use std::sync::Arc;

use mms::chat::ExtractiveChat;
use mms::embedding::{cosine, EmbeddingVector, HashEmbedder};
use mms::eval::metrics::{bleu1, token_f1};
use mms::extraction::{deterministic_fragments, fragments_to_json, parse_extractor_output};
use mms::generation::Answerer;
use mms::model::{
    compose_contextual_unit, compose_retrieval_unit, read_records_jsonl, write_records_jsonl,
    Block, DialogueRound, FragmentSet, LongTermRecord, Turn, UnitComposition,
};
use mms::retrieval::retrieve;
use mms::store::{EmbeddingStrategy, MemoryStore, StoreConfig};
use proptest::prelude::*;

use common::{oracle_top_k, store_with_vectors};

fn vector(dim: usize) -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(-100.0f32..100.0, dim)
}

/// Small integer components so exact score ties are common.
fn coarse_vector(dim: usize) -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec((-2i8..=2).prop_map(f32::from), dim)
}

fn phrase() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop::sample::select(vec![
            "rex", "dog", "park", "Tokyo", "ran", "the", "a", "cake",
        ]),
        0..6,
    )
    .prop_map(|w| w.join(" "))
}

fn fragment_list() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(
        prop_oneof![
            phrase(),
            "[ -~]{0,24}",
            Just("  padded  ".to_string()),
            Just("\"quoted\" {x}".to_string())
        ],
        0..5,
    )
}

fn fragment_set() -> impl Strategy<Value = FragmentSet> {
    (
        fragment_list(),
        fragment_list(),
        fragment_list(),
        fragment_list(),
    )
        .prop_map(|(k, c, e, s)| FragmentSet {
            keywords: k,
            cognitive_perspectives: c,
            episodic: e,
            semantic: s,
        })
}

fn dialogue_round(idx: usize) -> impl Strategy<Value = DialogueRound> {
    prop::collection::vec((prop::sample::select(vec!["Ann", "Ben"]), phrase()), 1..4).prop_map(
        move |turns| {
            let turns = turns
                .into_iter()
                .enumerate()
                .map(|(t, (speaker, text))| Turn::new(speaker, text, format!("d{idx}:{t}")))
                .collect();
            DialogueRound::new(format!("sess:r{idx}"), "sess", turns, None).unwrap()
        },
    )
}

fn composition() -> impl Strategy<Value = UnitComposition> {
    prop::array::uniform5(any::<bool>())
        .prop_filter("at least one block", |b| b.iter().any(|x| *x))
        .prop_map(|b| UnitComposition::new(b[0], b[1], b[2], b[3], b[4]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn cosine_is_bounded_and_symmetric(a in vector(8), b in vector(8)) {
        let ab = cosine(&a, &b);
        let ba = cosine(&b, &a);
        prop_assert!((-1.0..=1.0).contains(&ab.value));
        prop_assert_eq!(ab.value, ba.value);
        prop_assert_eq!(ab.value, common::reference_cosine(&a, &b));
    }

    #[test]
    fn cosine_is_scale_invariant(a in vector(8), b in vector(8), scale in 0.01f64..100.0) {
        let scaled: Vec<f64> = a.iter().map(|x| *x as f64 * scale).collect();
        let b64: Vec<f64> = b.iter().map(|x| *x as f64).collect();
        let a64: Vec<f64> = a.iter().map(|x| *x as f64).collect();
        prop_assert!((cosine(&scaled, &b64).value - cosine(&a64, &b64).value).abs() < 1e-9);
    }

    #[test]
    fn zero_vector_scores_zero(a in vector(8)) {
        let s = cosine(&a, &[0.0f32; 8]);
        prop_assert_eq!(s.value, 0.0);
        prop_assert!(s.zero_norm);
    }

    #[test]
    fn extractor_output_round_trips(fs in fragment_set()) {
        let normalized = fs.normalized();
        let parsed = parse_extractor_output(&fragments_to_json(&normalized)).unwrap();
        prop_assert_eq!(&parsed, &normalized);
        prop_assert_eq!(parse_extractor_output(&fragments_to_json(&parsed)).unwrap(), parsed);
    }

    #[test]
    fn normalization_is_idempotent(fs in fragment_set()) {
        let once = fs.normalized();
        prop_assert_eq!(once.clone().normalized(), once);
    }

    #[test]
    fn top_k_matches_full_sort(
        vectors in prop::collection::vec(coarse_vector(3), 1..60),
        query in coarse_vector(3),
        k in 1usize..70,
    ) {
        let store = store_with_vectors(&vectors, 1);
        let hits = store.top_k(&EmbeddingVector::new(query.clone()).unwrap(), k).unwrap();
        let oracle = oracle_top_k(&store, &query, k);
        let got: Vec<(String, f64)> = hits.into_iter().map(|h| (h.record_id, h.score)).collect();
        prop_assert_eq!(got, oracle);
    }

    #[test]
    fn fragment_multi_scores_max_over_views(n in 2usize..8, question in phrase()) {
        let embedder = HashEmbedder::new(32).unwrap();
        let config = StoreConfig::new(32).with_strategy(EmbeddingStrategy::FragmentMulti);
        let mut store = MemoryStore::new(config).unwrap();
        for idx in 0..n {
            let round = DialogueRound::new(
                format!("s:r{idx}"), "s",
                vec![Turn::new("Ann", format!("I adopted a dog named Rex {idx}"), format!("t{idx}"))],
                None,
            ).unwrap();
            let fragments = deterministic_fragments(&round);
            store.commit_record(LongTermRecord::new(round, fragments), &embedder).unwrap();
        }
        let q = mms::embedding::Embedder::embed(&embedder, &format!("{question} dog")).unwrap();
        for hit in store.top_k(&q, n).unwrap() {
            let best = store
                .index_entries()
                .filter(|(id, _, _)| *id == hit.record_id)
                .map(|(_, _, v)| cosine(q.values(), v.values()).value)
                .fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(hit.score, best);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pairing_is_a_bijection_in_any_commit_order(
        (rounds, order) in (2usize..10)
            .prop_flat_map(|n| (0..n).map(dialogue_round).collect::<Vec<_>>())
            .prop_flat_map(|rs| {
                let n = rs.len();
                (Just(rs), Just((0..n).collect::<Vec<_>>()).prop_shuffle())
            }),
        retrieval in composition(),
        contextual in composition(),
    ) {
        let embedder = HashEmbedder::new(64).unwrap();
        let records: Vec<LongTermRecord> = rounds
            .into_iter()
            .map(|r| {
                let fragments = deterministic_fragments(&r);
                LongTermRecord::new(r, fragments)
            })
            .collect();
        let config = StoreConfig::new(64).with_compositions(retrieval, contextual);

        let mut in_order = MemoryStore::new(config).unwrap();
        for r in &records {
            in_order.commit_record(r.clone(), &embedder).unwrap();
        }
        let shuffled: Vec<_> = order.iter().map(|i| records[*i].clone()).collect();
        let mut other = MemoryStore::new(config).unwrap();
        other.commit_records(shuffled, &embedder, 2).unwrap();

        prop_assert_eq!(&in_order, &other);
        other.check_invariants().unwrap();
        prop_assert_eq!(other.len(), records.len());
        prop_assert_eq!(other.contextual_units().count(), records.len());
        for r in &records {
            let unit = other.contextual_unit(&r.record_id).unwrap();
            prop_assert_eq!(unit, &compose_contextual_unit(r, &contextual).unwrap());
            prop_assert_eq!(other.retrieval_unit(&r.record_id).unwrap(), compose_retrieval_unit(r, &retrieval).unwrap());
            for block in Block::CANONICAL {
                prop_assert_eq!(unit.text_views.iter().any(|v| v.block == block), contextual.includes(block));
            }
        }
    }

    #[test]
    fn retrieval_is_prefix_stable(
        rounds in (1usize..12).prop_flat_map(|n| (0..n).map(dialogue_round).collect::<Vec<_>>()),
        question in phrase(),
        k in 1usize..6,
        extra in 1usize..6,
    ) {
        let embedder = HashEmbedder::new(64).unwrap();
        let mut store = MemoryStore::new(StoreConfig::new(64)).unwrap();
        for r in rounds {
            let fragments = deterministic_fragments(&r);
            store.commit_record(LongTermRecord::new(r, fragments), &embedder).unwrap();
        }
        let short = retrieve(&store, &question, k, &embedder).unwrap();
        let long = retrieve(&store, &question, k + extra, &embedder).unwrap();
        prop_assert_eq!(short.len(), k.min(store.len()));
        prop_assert_eq!(&long[..short.len()], &short[..]);
    }

    #[test]
    fn records_round_trip_through_jsonl(
        rounds in (1usize..6).prop_flat_map(|n| (0..n).map(dialogue_round).collect::<Vec<_>>()),
        fs in fragment_set(),
    ) {
        let records: Vec<_> = rounds.into_iter().map(|r| LongTermRecord::new(r, fs.clone())).collect();
        let mut buf = Vec::new();
        write_records_jsonl(&mut buf, &records).unwrap();
        prop_assert_eq!(read_records_jsonl(&buf[..]).unwrap(), records);
    }

    #[test]
    fn store_round_trips_through_disk(
        rounds in (1usize..6).prop_flat_map(|n| (0..n).map(dialogue_round).collect::<Vec<_>>()),
        multi in any::<bool>(),
    ) {
        let embedder = HashEmbedder::new(16).unwrap();
        let strategy = if multi { EmbeddingStrategy::FragmentMulti } else { EmbeddingStrategy::UnitConcat };
        let mut store = MemoryStore::new(StoreConfig::new(16).with_strategy(strategy)).unwrap();
        for r in rounds {
            let fragments = deterministic_fragments(&r);
            store.commit_record(LongTermRecord::new(r, fragments), &embedder).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        store.save(dir.path()).unwrap();
        prop_assert_eq!(MemoryStore::load(dir.path()).unwrap(), store);
    }

    #[test]
    fn composition_text_round_trips(comp in composition()) {
        prop_assert_eq!(comp.to_string().parse::<UnitComposition>().unwrap(), comp);
        let json = serde_json::to_string(&comp).unwrap();
        prop_assert_eq!(serde_json::from_str::<UnitComposition>(&json).unwrap(), comp);
    }

    #[test]
    fn answer_metrics_are_bounded(pred in phrase(), gold in phrase()) {
        let f1 = token_f1(&pred, &gold);
        prop_assert!((0.0..=1.0).contains(&f1));
        prop_assert_eq!(f1, token_f1(&gold, &pred));
        prop_assert!((0.0..=1.0).contains(&bleu1(&pred, &gold)));
        if !pred.trim().is_empty() {
            prop_assert_eq!(bleu1(&pred, &pred), 1.0);
        }
    }
}

#[test]
fn extractive_answers_are_deterministic() {
    let answerer = Answerer::new(Arc::new(ExtractiveChat));
    let context =
        "MEMORY 1 (score=0.9000, id=x):\nDIALOGUE:\nAnn: I adopted a dog named Rex.\nBen: Nice.";
    let first = answerer.answer("What is the dog's name?", context).unwrap();
    let second = answerer.answer("What is the dog's name?", context).unwrap();
    assert_eq!(first.0, second.0);
    assert!(first.0.contains("Rex"));
}
