//! LoCoMo-format corpora.
//!
//! The file is a JSON array of conversations (a single object is accepted
//! too). Each conversation holds `sample_id`, a `conversation` object with
//! `speaker_a`, `speaker_b`, `session_<n>` turn lists and
//! `session_<n>_date_time` strings, and a `qa` list of
//! `{question, answer, evidence, category}` entries. Turns carry `speaker`,
//! `dia_id` and `text`.
//!
//! Turn ids are namespaced as `{sample_id}:{dia_id}` so they stay unique
//! across conversations; evidence ids get the same prefix. Sessions are cut
//! into rounds of at most `window` turns.

use std::collections::BTreeSet;
use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{MmsError, Result};
use crate::model::{chunk_session, Category, DialogueRound, EvalQuery, Turn};

/// Answer used as gold for adversarial questions that carry no `answer` field.
pub const UNANSWERABLE: &str = "Not mentioned in the conversation";

/// LoCoMo's numeric category codes.
pub fn category_from_code(code: u64) -> Option<Category> {
    match code {
        1 => Some(Category::MultiHop),
        2 => Some(Category::Temporal),
        3 => Some(Category::OpenDomain),
        4 => Some(Category::SingleHop),
        5 => Some(Category::Adversarial),
        _ => None,
    }
}

pub fn category_code(category: Category) -> u64 {
    match category {
        Category::MultiHop => 1,
        Category::Temporal => 2,
        Category::OpenDomain => 3,
        Category::SingleHop => 4,
        Category::Adversarial => 5,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocomoCorpus {
    /// One entry per conversation (`sample_id`), in file order.
    pub conversations: Vec<String>,
    pub rounds: Vec<DialogueRound>,
    pub queries: Vec<EvalQuery>,
}

pub fn load_locomo(path: impl AsRef<Path>, window: usize) -> Result<LocomoCorpus> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| MmsError::load(path, e))?;
    parse_locomo(&text, window).map_err(|e| match e {
        MmsError::InvalidArgument(reason) => MmsError::load(path, reason),
        other => other,
    })
}

pub fn parse_locomo(json: &str, window: usize) -> Result<LocomoCorpus> {
    let bad = |msg: String| MmsError::InvalidArgument(msg);
    let value: Value =
        serde_json::from_str(json).map_err(|e| bad(format!("not valid JSON: {e}")))?;
    let samples = match value {
        Value::Array(items) => items,
        obj @ Value::Object(_) => vec![obj],
        _ => return Err(bad("expected an array of conversations".into())),
    };

    let mut corpus = LocomoCorpus {
        conversations: Vec::new(),
        rounds: Vec::new(),
        queries: Vec::new(),
    };
    for (idx, sample) in samples.iter().enumerate() {
        let obj = sample
            .as_object()
            .ok_or_else(|| bad(format!("conversation #{idx} is not an object")))?;
        let sample_id = match obj.get("sample_id") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => format!("conv-{idx}"),
        };
        let conversation = obj
            .get("conversation")
            .and_then(Value::as_object)
            .ok_or_else(|| bad(format!("{sample_id}: missing 'conversation' object")))?;

        let mut seen_turns = BTreeSet::new();
        for session in 1.. {
            let Some(turns_value) = conversation.get(&format!("session_{session}")) else {
                break;
            };
            let raw_turns: Vec<RawTurn> = serde_json::from_value(turns_value.clone())
                .map_err(|e| bad(format!("{sample_id}: session_{session}: {e}")))?;
            let turns: Vec<Turn> = raw_turns
                .into_iter()
                .map(|t| {
                    let text = match t.blip_caption.filter(|c| !c.trim().is_empty()) {
                        Some(caption) => {
                            format!("{} [shared a photo of {}]", t.text, caption.trim())
                        }
                        None => t.text,
                    };
                    Turn::new(t.speaker, text, format!("{sample_id}:{}", t.dia_id))
                })
                .collect();
            for turn in &turns {
                if !seen_turns.insert(turn.turn_id.clone()) {
                    return Err(bad(format!(
                        "{sample_id}: duplicate dia_id {}",
                        turn.turn_id
                    )));
                }
            }
            if turns.is_empty() {
                continue;
            }
            let timestamp = conversation
                .get(&format!("session_{session}_date_time"))
                .and_then(Value::as_str)
                .map(normalize_timestamp);
            let session_id = format!("{sample_id}:session_{session}");
            corpus.rounds.extend(chunk_session(
                &session_id,
                &turns,
                window,
                timestamp.as_deref(),
            )?);
        }

        let qa = obj
            .get("qa")
            .and_then(Value::as_array)
            .cloned()
            .unwrap_or_default();
        for (qi, entry) in qa.iter().enumerate() {
            corpus.queries.push(parse_query(&sample_id, qi, entry)?);
        }
        corpus.conversations.push(sample_id);
    }
    Ok(corpus)
}

#[derive(Deserialize)]
struct RawTurn {
    speaker: String,
    dia_id: String,
    #[serde(default)]
    text: String,
    #[serde(default)]
    blip_caption: Option<String>,
}

fn parse_query(sample_id: &str, idx: usize, entry: &Value) -> Result<EvalQuery> {
    let bad = |msg: String| MmsError::InvalidArgument(format!("{sample_id} qa[{idx}]: {msg}"));
    let question = entry
        .get("question")
        .and_then(Value::as_str)
        .ok_or_else(|| bad("missing question".into()))?;
    let category = match entry.get("category") {
        Some(Value::Number(n)) => n.as_u64().and_then(category_from_code),
        Some(Value::String(s)) => s.trim().parse().ok().and_then(category_from_code),
        _ => None,
    }
    .ok_or_else(|| {
        bad(format!(
            "unknown category {}",
            entry.get("category").unwrap_or(&Value::Null)
        ))
    })?;
    let gold_answer = match entry.get("answer") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        Some(Value::Bool(b)) => b.to_string(),
        _ if category == Category::Adversarial => UNANSWERABLE.to_string(),
        _ => String::new(),
    };
    let evidence = entry
        .get("evidence")
        .and_then(Value::as_array)
        .map(|items| {
            items
                .iter()
                .filter_map(Value::as_str)
                .flat_map(|s| s.split([';', ',']))
                .flat_map(str::split_whitespace)
                .map(|id| format!("{sample_id}:{id}"))
                .collect::<Vec<_>>()
        })
        .unwrap_or_default();
    EvalQuery::new(
        format!("{sample_id}:q{idx}"),
        question,
        gold_answer,
        evidence,
        category,
    )
    .map_err(|e| bad(e.to_string()))
}

/// LoCoMo writes times like "1:56 pm on 8 May, 2023"; convert to ISO-8601
/// when possible, otherwise keep the original string.
pub fn normalize_timestamp(raw: &str) -> String {
    let trimmed = raw.trim();
    NaiveDateTime::parse_from_str(trimmed, "%I:%M %p on %d %B, %Y")
        .map(|t| t.format("%Y-%m-%dT%H:%M:%S").to_string())
        .unwrap_or_else(|_| trimmed.to_string())
}

/// Authoring side of the format, used to build fixtures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocomoConversation {
    pub sample_id: String,
    pub speaker_a: String,
    pub speaker_b: String,
    pub sessions: Vec<LocomoSession>,
    pub qa: Vec<LocomoQa>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocomoSession {
    pub date_time: String,
    /// `(speaker, text)`; dia ids are assigned as `D{session}:{turn}`.
    pub turns: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocomoQa {
    pub question: String,
    pub answer: Option<String>,
    pub evidence: Vec<String>,
    pub category: Category,
}

/// Render conversations in LoCoMo layout.
pub fn to_locomo_json(conversations: &[LocomoConversation]) -> Value {
    Value::Array(
        conversations
            .iter()
            .map(|c| {
                let mut conv = Map::new();
                conv.insert("speaker_a".into(), json!(c.speaker_a));
                conv.insert("speaker_b".into(), json!(c.speaker_b));
                for (si, session) in c.sessions.iter().enumerate() {
                    let n = si + 1;
                    let turns: Vec<Value> = session
                        .turns
                        .iter()
                        .enumerate()
                        .map(|(ti, (speaker, text))| {
                            json!({"speaker": speaker, "dia_id": format!("D{n}:{}", ti + 1), "text": text})
                        })
                        .collect();
                    conv.insert(format!("session_{n}_date_time"), json!(session.date_time));
                    conv.insert(format!("session_{n}"), Value::Array(turns));
                }
                let qa: Vec<Value> = c
                    .qa
                    .iter()
                    .map(|q| {
                        let mut entry = json!({
                            "question": q.question,
                            "evidence": q.evidence,
                            "category": category_code(q.category),
                        });
                        if let Some(answer) = &q.answer {
                            entry["answer"] = json!(answer);
                        }
                        entry
                    })
                    .collect();
                json!({"sample_id": c.sample_id, "conversation": conv, "qa": qa})
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conversation(id: &str, sessions: usize) -> LocomoConversation {
        LocomoConversation {
            sample_id: id.into(),
            speaker_a: "Ann".into(),
            speaker_b: "Ben".into(),
            sessions: (0..sessions)
                .map(|s| LocomoSession {
                    date_time: "1:56 pm on 8 May, 2023".into(),
                    turns: vec![
                        ("Ann".into(), format!("Session {s} opener.")),
                        ("Ben".into(), "Reply.".into()),
                    ],
                })
                .collect(),
            qa: vec![LocomoQa {
                question: "What did Ann say?".into(),
                answer: Some("opener".into()),
                evidence: vec!["D1:1".into()],
                category: Category::SingleHop,
            }],
        }
    }

    #[test]
    fn round_trip_through_writer() {
        let json = to_locomo_json(&[conversation("c1", 3)]).to_string();
        let corpus = parse_locomo(&json, 20).unwrap();
        assert_eq!(corpus.conversations, vec!["c1"]);
        assert_eq!(corpus.rounds.len(), 3);
        assert_eq!(corpus.rounds[0].turns[0].turn_id, "c1:D1:1");
        assert_eq!(
            corpus.rounds[0].timestamp.as_deref(),
            Some("2023-05-08T13:56:00")
        );
        let q = &corpus.queries[0];
        assert_eq!(q.category, Category::SingleHop);
        assert!(q.gold_evidence.contains("c1:D1:1"));
        assert_eq!(q.query_id, "c1:q0");
    }

    #[test]
    fn ten_conversations() {
        let convs: Vec<_> = (0..10)
            .map(|i| conversation(&format!("conv-{i}"), 2))
            .collect();
        let corpus = parse_locomo(&to_locomo_json(&convs).to_string(), 20).unwrap();
        assert_eq!(corpus.conversations.len(), 10);
        assert_eq!(corpus.rounds.len(), 20);
    }

    #[test]
    fn window_splits_long_sessions() {
        let mut conv = conversation("c", 1);
        conv.sessions[0].turns = (0..45)
            .map(|i| ("Ann".to_string(), format!("line {i}")))
            .collect();
        let corpus = parse_locomo(&to_locomo_json(&[conv]).to_string(), 20).unwrap();
        assert_eq!(
            corpus
                .rounds
                .iter()
                .map(|r| r.turns.len())
                .collect::<Vec<_>>(),
            vec![20, 20, 5]
        );
    }

    #[test]
    fn category_codes_round_trip() {
        for cat in Category::ALL {
            assert_eq!(category_from_code(category_code(cat)), Some(cat));
        }
        assert_eq!(category_from_code(0), None);
        assert_eq!(category_from_code(6), None);
    }

    #[test]
    fn malformed_category_names_entry() {
        let mut json = to_locomo_json(&[conversation("c9", 1)]);
        json[0]["qa"][0]["category"] = json!(9);
        let err = parse_locomo(&json.to_string(), 20).unwrap_err().to_string();
        assert!(err.contains("c9 qa[0]"), "{err}");
        assert!(err.contains("unknown category 9"), "{err}");
    }

    #[test]
    fn missing_evidence_and_adversarial_answer() {
        let mut json = to_locomo_json(&[conversation("c", 1)]);
        json[0]["qa"] = json!([
            {"question": "q1", "answer": 2022, "category": 2},
            {"question": "q2", "adversarial_answer": "wrong", "evidence": ["D1:1; D1:2"], "category": 5},
        ]);
        let corpus = parse_locomo(&json.to_string(), 20).unwrap();
        assert!(corpus.queries[0].gold_evidence.is_empty());
        assert_eq!(corpus.queries[0].gold_answer, "2022");
        assert_eq!(corpus.queries[1].gold_answer, UNANSWERABLE);
        assert_eq!(corpus.queries[1].gold_evidence.len(), 2);
    }

    #[test]
    fn photo_captions_are_kept() {
        let json = json!([{
            "sample_id": "p",
            "conversation": {"speaker_a": "A", "speaker_b": "B", "session_1": [
                {"speaker": "A", "dia_id": "D1:1", "text": "Look!", "blip_caption": "a red bike"}
            ]},
            "qa": []
        }]);
        let corpus = parse_locomo(&json.to_string(), 20).unwrap();
        assert_eq!(
            corpus.rounds[0].turns[0].text,
            "Look! [shared a photo of a red bike]"
        );
    }

    #[test]
    fn timestamps() {
        assert_eq!(
            normalize_timestamp("10:37 am on 27 June, 2023"),
            "2023-06-27T10:37:00"
        );
        assert_eq!(normalize_timestamp("sometime"), "sometime");
    }
}
