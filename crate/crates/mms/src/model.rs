//! Domain types shared across the pipeline.
//!
//! A [`DialogueRound`] is the short-term memory handed to the extractor. The
//! extractor produces a [`FragmentSet`], and the pair is kept as a
//! [`LongTermRecord`]. Every record is projected twice: once into a
//! [`RetrievalUnit`] (the text that gets embedded and matched against
//! queries) and once into a [`ContextualUnit`] (the text that is handed to
//! the answering model). Both projections are controlled by a
//! [`UnitComposition`].

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{MmsError, Result};

/// Default number of consecutive turns folded into one round.
pub const DEFAULT_ROUND_WINDOW: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: String,
    pub text: String,
    pub turn_id: String,
}

impl Turn {
    pub fn new(
        speaker: impl Into<String>,
        text: impl Into<String>,
        turn_id: impl Into<String>,
    ) -> Self {
        Self {
            speaker: speaker.into(),
            text: text.into(),
            turn_id: turn_id.into(),
        }
    }
}

/// One round of dialogue: the unit of short-term memory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueRound {
    pub round_id: String,
    pub session_id: String,
    pub turns: Vec<Turn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

impl DialogueRound {
    pub fn new(
        round_id: impl Into<String>,
        session_id: impl Into<String>,
        turns: Vec<Turn>,
        timestamp: Option<String>,
    ) -> Result<Self> {
        let round = Self {
            round_id: round_id.into(),
            session_id: session_id.into(),
            turns,
            timestamp,
        };
        round.validate()?;
        Ok(round)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: &str| MmsError::InvalidRound {
            round_id: self.round_id.clone(),
            reason: reason.to_string(),
        };
        if self.round_id.trim().is_empty() {
            return Err(invalid("round_id is empty"));
        }
        if self.turns.is_empty() {
            return Err(invalid("round has no turns"));
        }
        let mut seen = HashSet::new();
        for turn in &self.turns {
            if !seen.insert(turn.turn_id.as_str()) {
                return Err(invalid(&format!("duplicate turn_id {}", turn.turn_id)));
            }
        }
        Ok(())
    }

    /// Turns whose text is blank are dropped; they carry nothing to extract.
    pub fn content_turns(&self) -> impl Iterator<Item = &Turn> {
        self.turns.iter().filter(|t| !t.text.trim().is_empty())
    }

    /// Raw dialogue text, one `speaker: text` line per non-empty turn.
    pub fn short_text(&self) -> String {
        self.content_turns()
            .map(|t| format!("{}: {}", t.speaker, t.text.trim()))
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn turn_ids(&self) -> impl Iterator<Item = &str> {
        self.turns.iter().map(|t| t.turn_id.as_str())
    }

    /// True when any of this round's turns (or the round itself) is named in `evidence`.
    pub fn covers_any(&self, evidence: &BTreeSet<String>) -> bool {
        evidence.contains(&self.round_id) || self.turn_ids().any(|id| evidence.contains(id))
    }
}

/// Split a session's turns into rounds of at most `window` consecutive turns.
///
/// Round ids are `{session_id}:r{index}`.
pub fn chunk_session(
    session_id: &str,
    turns: &[Turn],
    window: usize,
    timestamp: Option<&str>,
) -> Result<Vec<DialogueRound>> {
    if window == 0 {
        return Err(MmsError::InvalidArgument(
            "round window must be at least 1".into(),
        ));
    }
    turns
        .chunks(window)
        .enumerate()
        .map(|(idx, chunk)| {
            DialogueRound::new(
                format!("{session_id}:r{idx}"),
                session_id,
                chunk.to_vec(),
                timestamp.map(str::to_string),
            )
        })
        .collect()
}

/// The fragments extracted from one round.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FragmentSet {
    pub keywords: Vec<String>,
    pub cognitive_perspectives: Vec<String>,
    pub episodic: Vec<String>,
    pub semantic: Vec<String>,
}

impl FragmentSet {
    /// Trim every entry, drop blanks, and deduplicate. Keywords compare
    /// case-insensitively (the first spelling wins); other lists compare exactly.
    pub fn normalized(self) -> Self {
        fn clean(items: Vec<String>, key: impl Fn(&str) -> String) -> Vec<String> {
            let mut seen = HashSet::new();
            items
                .into_iter()
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty() && seen.insert(key(s)))
                .collect()
        }
        Self {
            keywords: clean(self.keywords, |s| s.to_lowercase()),
            cognitive_perspectives: clean(self.cognitive_perspectives, str::to_string),
            episodic: clean(self.episodic, str::to_string),
            semantic: clean(self.semantic, str::to_string),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.keywords.is_empty()
            && self.cognitive_perspectives.is_empty()
            && self.episodic.is_empty()
            && self.semantic.is_empty()
    }
}

/// Stable record identity: a content hash of `(session_id, round_id)`.
pub fn record_id_for(session_id: &str, round_id: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(session_id.as_bytes());
    hasher.update([0x1f]);
    hasher.update(round_id.as_bytes());
    hex::encode(&hasher.finalize()[..12])
}

/// The five-part long-term memory of one round: keywords, the raw round,
/// perspectives, episodic and semantic fragments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LongTermRecord {
    pub record_id: String,
    pub source: DialogueRound,
    pub fragments: FragmentSet,
}

impl LongTermRecord {
    pub fn new(source: DialogueRound, fragments: FragmentSet) -> Self {
        Self {
            record_id: record_id_for(&source.session_id, &source.round_id),
            source,
            fragments,
        }
    }

    pub fn view(&self, block: Block) -> TextView {
        let f = &self.fragments;
        let text = match block {
            Block::Keywords => f.keywords.join(", "),
            Block::Dialogue => self.source.short_text(),
            Block::Perspectives => bullets(&f.cognitive_perspectives),
            Block::Events => bullets(&f.episodic),
            Block::Facts => bullets(&f.semantic),
        };
        TextView { block, text }
    }
}

fn bullets(items: &[String]) -> String {
    items
        .iter()
        .map(|s| format!("- {s}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// A labeled section of a memory unit, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Block {
    #[serde(rename = "key")]
    Keywords,
    #[serde(rename = "short")]
    Dialogue,
    #[serde(rename = "cog")]
    Perspectives,
    #[serde(rename = "epi")]
    Events,
    #[serde(rename = "sem")]
    Facts,
}

impl Block {
    pub const CANONICAL: [Block; 5] = [
        Block::Keywords,
        Block::Dialogue,
        Block::Perspectives,
        Block::Events,
        Block::Facts,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Block::Keywords => "KEYWORDS:",
            Block::Dialogue => "DIALOGUE:",
            Block::Perspectives => "PERSPECTIVES:",
            Block::Events => "EVENTS:",
            Block::Facts => "FACTS:",
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Block::Keywords => "key",
            Block::Dialogue => "short",
            Block::Perspectives => "cog",
            Block::Events => "epi",
            Block::Facts => "sem",
        }
    }
}

impl FromStr for Block {
    type Err = MmsError;

    fn from_str(s: &str) -> Result<Self> {
        Block::CANONICAL
            .into_iter()
            .find(|b| b.short_name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                MmsError::InvalidArgument(format!(
                    "unknown block {s:?} (expected key, short, cog, epi or sem)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextView {
    pub block: Block,
    pub text: String,
}

impl TextView {
    /// Section label followed by the block text.
    pub fn render(&self) -> String {
        format!("{}\n{}", self.block.label(), self.text)
    }
}

/// Which blocks make up a memory unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UnitComposition {
    pub include_key: bool,
    pub include_short: bool,
    pub include_cog: bool,
    pub include_epi: bool,
    pub include_sem: bool,
}

impl UnitComposition {
    /// {key, short, cog, epi}: semantic facts are left out of matching.
    pub const RETRIEVAL: Self = Self::new(true, true, true, true, false);
    /// {key, short, cog, sem}: episodic events are left out of the context.
    pub const CONTEXTUAL: Self = Self::new(true, true, true, false, true);
    /// Raw dialogue only.
    pub const SHORT_ONLY: Self = Self::new(false, true, false, false, false);

    pub const fn new(key: bool, short: bool, cog: bool, epi: bool, sem: bool) -> Self {
        Self {
            include_key: key,
            include_short: short,
            include_cog: cog,
            include_epi: epi,
            include_sem: sem,
        }
    }

    pub fn from_blocks(blocks: impl IntoIterator<Item = Block>) -> Result<Self> {
        let mut comp = Self::new(false, false, false, false, false);
        for block in blocks {
            comp = comp.with(block, true);
        }
        comp.validate()?;
        Ok(comp)
    }

    pub fn includes(&self, block: Block) -> bool {
        match block {
            Block::Keywords => self.include_key,
            Block::Dialogue => self.include_short,
            Block::Perspectives => self.include_cog,
            Block::Events => self.include_epi,
            Block::Facts => self.include_sem,
        }
    }

    pub fn with(mut self, block: Block, on: bool) -> Self {
        match block {
            Block::Keywords => self.include_key = on,
            Block::Dialogue => self.include_short = on,
            Block::Perspectives => self.include_cog = on,
            Block::Events => self.include_epi = on,
            Block::Facts => self.include_sem = on,
        }
        self
    }

    pub fn without(self, block: Block) -> Self {
        self.with(block, false)
    }

    pub fn blocks(&self) -> impl Iterator<Item = Block> + '_ {
        Block::CANONICAL.into_iter().filter(|b| self.includes(*b))
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks().next().is_none() {
            return Err(MmsError::InvalidComposition);
        }
        Ok(())
    }
}

impl fmt::Display for UnitComposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.blocks().map(Block::short_name).collect();
        if names.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&names.join("+"))
        }
    }
}

impl FromStr for UnitComposition {
    type Err = MmsError;

    /// Accepts `key,short,cog` or `key+short+cog`.
    fn from_str(s: &str) -> Result<Self> {
        let blocks = s
            .split([',', '+'])
            .filter(|p| !p.trim().is_empty())
            .map(Block::from_str)
            .collect::<Result<Vec<_>>>()?;
        Self::from_blocks(blocks)
    }
}

/// The text that gets embedded and matched against queries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalUnit {
    pub record_id: String,
    pub text_views: Vec<TextView>,
    pub composition: UnitComposition,
}

/// The text that is handed to the answering model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextualUnit {
    pub record_id: String,
    pub text_views: Vec<TextView>,
    pub composition: UnitComposition,
}

impl RetrievalUnit {
    pub fn render(&self) -> String {
        render_views(&self.text_views)
    }
}

impl ContextualUnit {
    pub fn render(&self) -> String {
        render_views(&self.text_views)
    }
}

fn render_views(views: &[TextView]) -> String {
    views
        .iter()
        .map(TextView::render)
        .collect::<Vec<_>>()
        .join("\n")
}

fn compose_views(record: &LongTermRecord, comp: &UnitComposition) -> Result<Vec<TextView>> {
    comp.validate()?;
    Ok(comp.blocks().map(|b| record.view(b)).collect())
}

pub fn compose_retrieval_unit(
    record: &LongTermRecord,
    comp: &UnitComposition,
) -> Result<RetrievalUnit> {
    Ok(RetrievalUnit {
        record_id: record.record_id.clone(),
        text_views: compose_views(record, comp)?,
        composition: *comp,
    })
}

pub fn compose_contextual_unit(
    record: &LongTermRecord,
    comp: &UnitComposition,
) -> Result<ContextualUnit> {
    Ok(ContextualUnit {
        record_id: record.record_id.clone(),
        text_views: compose_views(record, comp)?,
        composition: *comp,
    })
}

/// The five LoCoMo question types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    SingleHop,
    MultiHop,
    Temporal,
    OpenDomain,
    Adversarial,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::SingleHop,
        Category::MultiHop,
        Category::Temporal,
        Category::OpenDomain,
        Category::Adversarial,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Category::SingleHop => "Single Hop",
            Category::MultiHop => "Multi Hop",
            Category::Temporal => "Temporal",
            Category::OpenDomain => "Open Domain",
            Category::Adversarial => "Adversarial",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalQuery {
    pub query_id: String,
    pub question: String,
    pub gold_answer: String,
    /// Turn ids (or round ids) holding the answer.
    pub gold_evidence: BTreeSet<String>,
    pub category: Category,
}

impl EvalQuery {
    pub fn new(
        query_id: impl Into<String>,
        question: impl Into<String>,
        gold_answer: impl Into<String>,
        gold_evidence: impl IntoIterator<Item = String>,
        category: Category,
    ) -> Result<Self> {
        let question = question.into();
        if question.trim().is_empty() {
            return Err(MmsError::InvalidArgument(
                "question must not be empty".into(),
            ));
        }
        Ok(Self {
            query_id: query_id.into(),
            question,
            gold_answer: gold_answer.into(),
            gold_evidence: gold_evidence.into_iter().collect(),
            category,
        })
    }
}

/// Write one record per line.
pub fn write_records_jsonl<'a, W: Write>(
    mut out: W,
    records: impl IntoIterator<Item = &'a LongTermRecord>,
) -> Result<()> {
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Read one record per non-blank line. Errors name the offending line.
pub fn read_records_jsonl<R: BufRead>(input: R) -> Result<Vec<LongTermRecord>> {
    let mut records = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: LongTermRecord = serde_json::from_str(&line)
            .map_err(|e| MmsError::InvalidArgument(format!("line {}: {e}", idx + 1)))?;
        records.push(record);
    }
    Ok(records)
}
