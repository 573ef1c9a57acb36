//! Turning a dialogue round into memory fragments.
//!
//! Two backends exist. `ChatModel` sends the versioned extraction prompt to a
//! [`ChatTransport`] and parses the JSON object it returns. `Deterministic` is a
//! pure rule-based extractor used for fixtures and offline runs:
//!
//! * keywords: the ten most frequent content words, ties alphabetical;
//! * perspectives: three template rewrites (summary, first-person intent, topic category);
//! * episodic: the first sentence of each turn that contains an event verb,
//!   restated in the third person;
//! * semantic: subject/predicate/object strings harvested by a few patterns
//!   (`X has a N named Y`, `X is a Y`, `X's N is Y`, `X works at Y`).

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, LazyLock};

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::chat::{ChatMessage, ChatRequest, ChatTransport, Clock, RetryPolicy, SystemClock};
use crate::error::{MmsError, Result};
use crate::model::{DialogueRound, FragmentSet, LongTermRecord};
use crate::prompts;
use crate::text::{content_tokens, tokenize};

pub const EXTRACTION_TEMPERATURE: f64 = 0.5;
pub const PERSPECTIVE_COUNT: usize = 3;
const MAX_KEYWORDS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExtractorKind {
    ChatModel,
    Deterministic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractorBackend {
    pub kind: ExtractorKind,
    /// Only meaningful for `ChatModel`.
    pub model_name: String,
    /// Ignored by `Deterministic`.
    pub temperature: f64,
    pub prompt_template_id: String,
}

impl ExtractorBackend {
    pub fn deterministic() -> Self {
        Self {
            kind: ExtractorKind::Deterministic,
            model_name: String::new(),
            temperature: EXTRACTION_TEMPERATURE,
            prompt_template_id: "deterministic/v1".into(),
        }
    }

    pub fn chat_model(model_name: impl Into<String>) -> Self {
        Self {
            kind: ExtractorKind::ChatModel,
            model_name: model_name.into(),
            temperature: EXTRACTION_TEMPERATURE,
            prompt_template_id: prompts::EXTRACT_V1.into(),
        }
    }

    pub fn describe(&self) -> String {
        match self.kind {
            ExtractorKind::Deterministic => "deterministic".into(),
            ExtractorKind::ChatModel => format!(
                "chat:{}@{} ({})",
                self.model_name, self.temperature, self.prompt_template_id
            ),
        }
    }
}

/// Token and latency cost of one backend call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UsageRecord {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// Seconds.
    pub wall_latency: f64,
}

impl UsageRecord {
    pub fn total_tokens(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

/// An extraction backend bound to its transport, clock and retry policy.
#[derive(Clone)]
pub struct Extractor {
    backend: ExtractorBackend,
    transport: Option<Arc<dyn ChatTransport>>,
    clock: Arc<dyn Clock>,
    retry: RetryPolicy,
}

impl std::fmt::Debug for Extractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Extractor")
            .field("backend", &self.backend)
            .field("transport", &self.transport.as_ref().map(|t| t.name()))
            .field("retry", &self.retry)
            .finish()
    }
}

impl Extractor {
    pub fn deterministic() -> Self {
        Self {
            backend: ExtractorBackend::deterministic(),
            transport: None,
            clock: Arc::new(SystemClock::default()),
            retry: RetryPolicy::default(),
        }
    }

    pub fn chat(backend: ExtractorBackend, transport: Arc<dyn ChatTransport>) -> Result<Self> {
        if backend.kind != ExtractorKind::ChatModel {
            return Err(MmsError::Config(
                "chat extractor needs a ChatModel backend".into(),
            ));
        }
        if !(0.0..=1.0).contains(&backend.temperature) {
            return Err(MmsError::Config(format!(
                "temperature {} outside [0, 1]",
                backend.temperature
            )));
        }
        prompts::template(&backend.prompt_template_id)?;
        Ok(Self {
            backend,
            transport: Some(transport),
            clock: Arc::new(SystemClock::default()),
            retry: RetryPolicy::default(),
        })
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn backend(&self) -> &ExtractorBackend {
        &self.backend
    }

    /// The request a `ChatModel` backend would send for this round.
    pub fn render_request(&self, round: &DialogueRound) -> Result<ChatRequest> {
        let template = prompts::template(&self.backend.prompt_template_id)?;
        let stamp = round
            .timestamp
            .as_deref()
            .map(|t| format!(" (recorded {t})"))
            .unwrap_or_default();
        let prompt = prompts::render(
            template,
            &[("dialogue", &round.short_text()), ("timestamp", &stamp)],
        );
        Ok(ChatRequest {
            model: self.backend.model_name.clone(),
            temperature: self.backend.temperature,
            messages: vec![
                ChatMessage::system(
                    "You turn dialogue into structured long-term memory. Reply with JSON only.",
                ),
                ChatMessage::user(prompt),
            ],
        })
    }

    pub fn extract(&self, round: &DialogueRound) -> Result<(FragmentSet, UsageRecord)> {
        round.validate()?;
        let started = self.clock.now();
        match (&self.backend.kind, &self.transport) {
            (ExtractorKind::Deterministic, _) => {
                let fragments = deterministic_fragments(round);
                let wall_latency = (self.clock.now() - started).max(0.0);
                Ok((
                    fragments,
                    UsageRecord {
                        wall_latency,
                        ..Default::default()
                    },
                ))
            }
            (ExtractorKind::ChatModel, Some(transport)) => {
                if round.content_turns().next().is_none() {
                    let wall_latency = (self.clock.now() - started).max(0.0);
                    return Ok((
                        FragmentSet::default(),
                        UsageRecord {
                            wall_latency,
                            ..Default::default()
                        },
                    ));
                }
                let request = self.render_request(round)?;
                let response = self.retry.run(|| transport.complete(&request)).map_err(
                    |(attempts, err)| MmsError::Extraction {
                        attempts,
                        message: err.to_string(),
                    },
                )?;
                let wall_latency = (self.clock.now() - started).max(0.0);
                let fragments = parse_extractor_output(&response.text)?;
                Ok((
                    fragments,
                    UsageRecord {
                        prompt_tokens: response.usage.prompt_tokens,
                        completion_tokens: response.usage.completion_tokens,
                        wall_latency,
                    },
                ))
            }
            (ExtractorKind::ChatModel, None) => Err(MmsError::Config(
                "ChatModel extractor has no transport".into(),
            )),
        }
    }

    /// Extract every round, `jobs` at a time. Output is ordered by `round_id`
    /// regardless of `jobs`.
    pub fn extract_all(
        &self,
        rounds: &[DialogueRound],
        jobs: usize,
    ) -> Result<Vec<(LongTermRecord, UsageRecord)>> {
        let mut ordered: Vec<&DialogueRound> = rounds.iter().collect();
        ordered.sort_by(|a, b| a.round_id.cmp(&b.round_id));
        let run = || {
            ordered
                .par_iter()
                .map(|round| {
                    let (fragments, usage) = self.extract(round)?;
                    Ok((LongTermRecord::new((*round).clone(), fragments), usage))
                })
                .collect::<Result<Vec<_>>>()
        };
        with_jobs(jobs, run)
    }
}

/// Run `f` on a pool of `jobs` threads (0 means rayon's default).
pub(crate) fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> T {
    if jobs == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(f),
        Err(err) => {
            log::warn!("could not build a {jobs}-thread pool ({err}); using the global pool");
            f()
        }
    }
}

pub fn extract_fragments(
    round: &DialogueRound,
    extractor: &Extractor,
) -> Result<(FragmentSet, UsageRecord)> {
    extractor.extract(round)
}

/// Serialize fragments in the shape the extraction prompt asks for.
pub fn fragments_to_json(fragments: &FragmentSet) -> String {
    serde_json::json!({
        "keywords": fragments.keywords,
        "perspectives": fragments.cognitive_perspectives,
        "events": fragments.episodic,
        "facts": fragments.semantic,
    })
    .to_string()
}

/// Leniently parse a model reply holding one JSON object with the keys
/// `keywords`, `perspectives`, `events` and `facts`.
///
/// Code fences and surrounding prose are ignored; the first `{` that starts
/// a valid JSON object wins. Missing keys become empty lists, single strings
/// become one-element lists, and entries are trimmed and deduplicated.
pub fn parse_extractor_output(raw: &str) -> Result<FragmentSet> {
    let parse_err = |reason: &str| MmsError::ExtractionParse {
        reason: reason.to_string(),
        raw: raw.to_string(),
    };
    let object = raw
        .match_indices('{')
        .find_map(|(pos, _)| {
            let mut stream =
                serde_json::Deserializer::from_str(&raw[pos..]).into_iter::<serde_json::Value>();
            match stream.next() {
                Some(Ok(serde_json::Value::Object(map))) => Some(map),
                _ => None,
            }
        })
        .ok_or_else(|| parse_err("no JSON object found"))?;

    const KEYS: [[&str; 2]; 4] = [
        ["keywords", "keywords"],
        ["perspectives", "cognitive_perspectives"],
        ["events", "episodic"],
        ["facts", "semantic"],
    ];
    if !KEYS.iter().flatten().any(|k| object.contains_key(*k)) {
        return Err(parse_err(
            "JSON object has none of keywords/perspectives/events/facts",
        ));
    }
    let list = |names: &[&str; 2]| -> Vec<String> {
        let value = names.iter().find_map(|n| object.get(*n));
        match value {
            Some(serde_json::Value::Array(items)) => items
                .iter()
                .filter_map(|item| match item {
                    serde_json::Value::String(s) => Some(s.clone()),
                    serde_json::Value::Number(n) => Some(n.to_string()),
                    _ => None,
                })
                .collect(),
            Some(serde_json::Value::String(s)) => vec![s.clone()],
            _ => Vec::new(),
        }
    };
    Ok(FragmentSet {
        keywords: list(&KEYS[0]),
        cognitive_perspectives: list(&KEYS[1]),
        episodic: list(&KEYS[2]),
        semantic: list(&KEYS[3]),
    }
    .normalized())
}

/// The rule-based extractor. A pure function of the round's content.
pub fn deterministic_fragments(round: &DialogueRound) -> FragmentSet {
    let turns: Vec<_> = round.content_turns().collect();
    if turns.is_empty() {
        return FragmentSet::default();
    }
    let keywords = keywords_of(turns.iter().map(|t| t.text.as_str()));
    let perspectives = perspectives_of(round, &keywords);

    let date = round
        .timestamp
        .as_deref()
        .map(|t| t.split('T').next().unwrap_or(t));
    let episodic = turns
        .iter()
        .filter_map(|turn| event_sentence(&turn.speaker, &turn.text, date))
        .collect();
    let semantic = turns
        .iter()
        .flat_map(|turn| facts_of(&turn.speaker, &turn.text))
        .collect();

    FragmentSet {
        keywords,
        cognitive_perspectives: perspectives,
        episodic,
        semantic,
    }
    .normalized()
}

fn keywords_of<'a>(texts: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut freq: BTreeMap<String, usize> = BTreeMap::new();
    for text in texts {
        for token in content_tokens(text) {
            if !FILLER.contains(&token.as_str()) {
                *freq.entry(token).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<_> = freq.into_iter().collect();
    // BTreeMap iteration is alphabetical and the sort is stable
    ranked.sort_by_key(|(_, n)| std::cmp::Reverse(*n));
    ranked
        .into_iter()
        .take(MAX_KEYWORDS)
        .map(|(t, _)| t)
        .collect()
}

fn perspectives_of(round: &DialogueRound, keywords: &[String]) -> Vec<String> {
    let mut speakers: Vec<&str> = Vec::new();
    for turn in round.content_turns() {
        if !speakers.contains(&turn.speaker.as_str()) {
            speakers.push(&turn.speaker);
        }
    }
    let who = join_and(&speakers);

    let summary = if keywords.is_empty() {
        format!("{who} had a short exchange.")
    } else {
        format!(
            "{who} talked about {}.",
            join_and(
                &keywords
                    .iter()
                    .take(3)
                    .map(String::as_str)
                    .collect::<Vec<_>>()
            )
        )
    };

    let lead = speakers[0];
    let lead_text: Vec<&str> = round
        .content_turns()
        .filter(|t| t.speaker == lead)
        .map(|t| t.text.as_str())
        .collect();
    let lead_keywords = keywords_of(lead_text.into_iter());
    let audience = speakers.get(1).map(|s| format!(" {s}")).unwrap_or_default();
    let intent = if lead_keywords.is_empty() {
        format!("As {lead}, I wanted to check in with{audience}.")
    } else {
        format!(
            "As {lead}, I wanted to tell{audience} about {}.",
            join_and(
                &lead_keywords
                    .iter()
                    .take(4)
                    .map(String::as_str)
                    .collect::<Vec<_>>()
            )
        )
    };

    let tokens: BTreeSet<String> = round
        .content_turns()
        .flat_map(|t| tokenize(&t.text))
        .collect();
    let mut topics: Vec<&str> = Vec::new();
    for (triggers, labels) in TOPICS {
        if triggers.iter().any(|w| tokens.contains(*w)) {
            for label in *labels {
                if !topics.contains(label) {
                    topics.push(label);
                }
            }
        }
    }
    let topic = if topics.is_empty() {
        match keywords.first() {
            Some(k) => format!("This conversation is about everyday life, mainly {k}."),
            None => "This conversation is about everyday life.".to_string(),
        }
    } else {
        format!("This conversation is about {}.", join_and(&topics))
    };

    vec![summary, intent, topic]
}

fn join_and(items: &[&str]) -> String {
    match items {
        [] => String::new(),
        [one] => one.to_string(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

fn sentences(text: &str) -> impl Iterator<Item = &str> {
    text.split_inclusive(['.', '!', '?'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
}

fn event_sentence(speaker: &str, text: &str, date: Option<&str>) -> Option<String> {
    for sentence in sentences(text) {
        let words: Vec<&str> = sentence.split_whitespace().collect();
        let verb_at = words.iter().position(|w| {
            let bare: String = w
                .chars()
                .filter(|c| c.is_alphanumeric())
                .collect::<String>()
                .to_lowercase();
            EVENT_VERBS.contains(&bare.as_str())
        });
        if let Some(i) = verb_at {
            let clause = words[i..].join(" ");
            let clause = clause.trim_end_matches(['.', '!', '?', ',', ';']);
            let when = date.map(|d| format!(" (around {d})")).unwrap_or_default();
            return Some(format!("{speaker} {clause}{when}."));
        }
    }
    None
}

static NAMED: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\b(?i:a|an|my|our)\s+([A-Za-z]+)\s+(?i:named|called)\s+([A-Z][\w'-]*)").unwrap()
});
static HAVE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\bI\s+(?i:have|own)\s+((?i:a|an|two|three|four|\d+)\s+[A-Za-z][\w\s-]*?)(?:[.,!?;]|$|\s+and\s|\s+but\s)").unwrap()
});
static I_AM: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"\b(?:I am|I'm|I’m)\s+((?i:a|an)\s+[A-Za-z][\w\s-]*?)(?:[.,!?;]|$|\s+and\s|\s+but\s)",
    )
    .unwrap()
});
static MY_X_IS: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\b(?i:my)\s+([A-Za-z]+)\s+is\s+([\w\s'-]+?)(?:[.,!?;]|$|\s+and\s|\s+but\s)")
        .unwrap()
});
static I_WORK: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"\bI\s+(work|live|study)\s+(at|in|as|for)\s+([\w\s'-]+?)(?:[.,!?;]|$|\s+and\s|\s+but\s)",
    )
    .unwrap()
});
static THIRD_IS: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\b([A-Z][a-z]+)\s+is\s+((?i:a|an|my)\s+[\w\s-]+?)(?:[.,!?;]|$|\s+and\s|\s+but\s)")
        .unwrap()
});

fn facts_of(speaker: &str, text: &str) -> Vec<String> {
    let mut facts = Vec::new();
    for sentence in sentences(text) {
        for c in NAMED.captures_iter(sentence) {
            facts.push(format!(
                "{speaker} has a {} named {}",
                c[1].to_lowercase(),
                &c[2]
            ));
        }
        for c in HAVE.captures_iter(sentence) {
            facts.push(format!("{speaker} has {}", c[1].trim()));
        }
        for c in I_AM.captures_iter(sentence) {
            facts.push(format!("{speaker} is {}", c[1].trim()));
        }
        for c in MY_X_IS.captures_iter(sentence) {
            let noun = c[1].to_lowercase();
            if noun != "name" || !c[2].trim().is_empty() {
                facts.push(format!("{speaker}'s {noun} is {}", c[2].trim()));
            }
        }
        for c in I_WORK.captures_iter(sentence) {
            let verb = match &c[1] {
                "study" => "studies".to_string(),
                other => format!("{other}s"),
            };
            facts.push(format!("{speaker} {verb} {} {}", &c[2], c[3].trim()));
        }
        for c in THIRD_IS.captures_iter(sentence) {
            if !crate::text::is_stopword(&c[1].to_lowercase()) {
                facts.push(format!("{} is {}", &c[1], c[2].trim()));
            }
        }
    }
    facts
}

/// Conversational filler that never makes a useful keyword.
const FILLER: &[&str] = &[
    "awesome",
    "congrats",
    "congratulations",
    "cool",
    "glad",
    "going",
    "good",
    "great",
    "guess",
    "let",
    "like",
    "lot",
    "named",
    "nice",
    "ok",
    "okay",
    "sounds",
    "sure",
    "thank",
    "thanks",
    "think",
    "wow",
];

const EVENT_VERBS: &[&str] = &[
    "adopted",
    "applied",
    "arrived",
    "attended",
    "baked",
    "began",
    "booked",
    "bought",
    "broke",
    "built",
    "celebrated",
    "climbed",
    "competed",
    "completed",
    "cooked",
    "decided",
    "enrolled",
    "finished",
    "found",
    "gave",
    "got",
    "graduated",
    "hiked",
    "hosted",
    "joined",
    "launched",
    "learned",
    "left",
    "lost",
    "made",
    "married",
    "met",
    "moved",
    "opened",
    "organized",
    "painted",
    "passed",
    "performed",
    "planted",
    "played",
    "published",
    "quit",
    "ran",
    "received",
    "returned",
    "saw",
    "signed",
    "sold",
    "started",
    "took",
    "traveled",
    "travelled",
    "visited",
    "volunteered",
    "watched",
    "went",
    "won",
    "wrote",
];

/// Trigger words and the topic labels they imply.
const TOPICS: &[(&[&str], &[&str])] = &[
    (
        &[
            "dog", "dogs", "cat", "cats", "puppy", "kitten", "pet", "pets", "hamster", "parrot",
            "vet", "rabbit",
        ],
        &["pet", "animal"],
    ),
    (
        &[
            "paint",
            "painting",
            "painted",
            "sketch",
            "drawing",
            "canvas",
            "art",
            "pottery",
            "sculpture",
            "gallery",
        ],
        &["art", "hobby"],
    ),
    (
        &[
            "guitar", "piano", "violin", "song", "songs", "concert", "band", "music", "sing",
            "singing", "album",
        ],
        &["music", "hobby"],
    ),
    (
        &[
            "run", "running", "ran", "marathon", "gym", "hike", "hiking", "hiked", "yoga", "swim",
            "swimming", "cycling", "workout", "race", "climbing", "climbed",
        ],
        &["fitness", "sport", "exercise"],
    ),
    (
        &[
            "job",
            "work",
            "working",
            "office",
            "boss",
            "promotion",
            "career",
            "company",
            "interview",
            "hired",
            "startup",
            "colleague",
            "colleagues",
            "manager",
        ],
        &["work", "career"],
    ),
    (
        &[
            "school",
            "class",
            "classes",
            "course",
            "degree",
            "study",
            "studying",
            "exam",
            "university",
            "college",
            "graduated",
            "teacher",
            "lesson",
            "lessons",
        ],
        &["education", "learning"],
    ),
    (
        &[
            "mom",
            "mother",
            "dad",
            "father",
            "sister",
            "brother",
            "son",
            "daughter",
            "kids",
            "children",
            "family",
            "parents",
            "grandma",
            "grandmother",
            "husband",
            "wife",
        ],
        &["family"],
    ),
    (
        &[
            "trip",
            "travel",
            "traveled",
            "travelled",
            "flight",
            "vacation",
            "visited",
            "beach",
            "abroad",
            "camping",
            "paris",
            "tokyo",
            "rome",
            "hotel",
        ],
        &["travel", "trip", "vacation"],
    ),
    (
        &[
            "cook",
            "cooking",
            "cooked",
            "bake",
            "baking",
            "baked",
            "recipe",
            "dinner",
            "pizza",
            "cake",
            "restaurant",
            "food",
            "lunch",
            "bread",
        ],
        &["food", "cooking"],
    ),
    (
        &[
            "doctor", "hospital", "sick", "injury", "injured", "surgery", "health", "therapy",
            "medicine", "knee",
        ],
        &["health"],
    ),
    (
        &["book", "books", "novel", "library", "author", "reading"],
        &["reading", "book"],
    ),
    (
        &[
            "house",
            "apartment",
            "moved",
            "garden",
            "gardening",
            "plants",
            "flowers",
            "neighborhood",
            "rent",
        ],
        &["home"],
    ),
    (
        &[
            "friend",
            "friends",
            "party",
            "wedding",
            "birthday",
            "married",
            "anniversary",
        ],
        &["social life", "celebration"],
    ),
];
