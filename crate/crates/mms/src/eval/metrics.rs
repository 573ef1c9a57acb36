//! Recall@N, token F1 and BLEU-1.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{MmsError, Result};

/// What one query retrieved, and which records count as gold for it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalJudgment {
    pub query_id: String,
    /// Retrieved record ids in rank order.
    pub topn_ids: Vec<String>,
    /// Records whose provenance intersects the query's gold evidence.
    pub gold_hits: BTreeSet<String>,
}

impl RetrievalJudgment {
    /// `|top-n ∩ gold| / min(n, |gold|)`, or `None` when the gold set is empty.
    pub fn recall(&self, n: usize) -> Option<f64> {
        if self.gold_hits.is_empty() || n == 0 {
            return None;
        }
        let found = self
            .topn_ids
            .iter()
            .take(n)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .filter(|id| self.gold_hits.contains(*id))
            .count();
        Some(found as f64 / n.min(self.gold_hits.len()) as f64)
    }
}

/// Mean Recall@n over the judgments that have gold evidence. Judgments with
/// an empty gold set are skipped; with none left the result is 0.
pub fn recall_at_n(judgments: &[RetrievalJudgment], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(MmsError::InvalidArgument("Recall@N needs N >= 1".into()));
    }
    let scores: Vec<f64> = judgments.iter().filter_map(|j| j.recall(n)).collect();
    if scores.is_empty() {
        return Ok(0.0);
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Number of judgments left out of Recall@N for lack of gold evidence.
pub fn excluded_from_recall(judgments: &[RetrievalJudgment]) -> usize {
    judgments.iter().filter(|j| j.gold_hits.is_empty()).count()
}

fn strip_punctuation(text: &str) -> String {
    text.chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect::<String>()
        .to_lowercase()
}

/// Lowercase, drop punctuation and the articles a/an/the, split on whitespace.
pub fn normalize_answer(text: &str) -> Vec<String> {
    strip_punctuation(text)
        .split_whitespace()
        .filter(|t| !matches!(*t, "a" | "an" | "the"))
        .map(str::to_string)
        .collect()
}

fn counts(tokens: &[String]) -> HashMap<&str, usize> {
    let mut map = HashMap::new();
    for t in tokens {
        *map.entry(t.as_str()).or_insert(0) += 1;
    }
    map
}

/// Harmonic mean of token precision and recall over the normalized multisets.
/// Both sides empty scores 1; exactly one side empty scores 0.
pub fn token_f1(prediction: &str, gold: &str) -> f64 {
    let pred = normalize_answer(prediction);
    let gold = normalize_answer(gold);
    if pred.is_empty() || gold.is_empty() {
        return if pred.is_empty() && gold.is_empty() {
            1.0
        } else {
            0.0
        };
    }
    let gold_counts = counts(&gold);
    let overlap: usize = counts(&pred)
        .into_iter()
        .map(|(tok, c)| c.min(gold_counts.get(tok).copied().unwrap_or(0)))
        .sum();
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pred.len() as f64;
    let recall = overlap as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Lowercase, drop punctuation, split on whitespace. Articles are kept.
pub fn bleu_tokens(text: &str) -> Vec<String> {
    strip_punctuation(text)
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// Clipped unigram precision times the brevity penalty
/// `exp(1 - r/c)` (applied when the hypothesis is shorter than the reference).
pub fn bleu1(prediction: &str, gold: &str) -> f64 {
    let hyp = bleu_tokens(prediction);
    let reference = bleu_tokens(gold);
    if hyp.is_empty() {
        return 0.0;
    }
    let ref_counts = counts(&reference);
    let clipped: usize = counts(&hyp)
        .into_iter()
        .map(|(tok, c)| c.min(ref_counts.get(tok).copied().unwrap_or(0)))
        .sum();
    let precision = clipped as f64 / hyp.len() as f64;
    let (c, r) = (hyp.len() as f64, reference.len() as f64);
    let brevity = if c >= r { 1.0 } else { (1.0 - r / c).exp() };
    precision * brevity
}

#[cfg(test)]
mod tests {
    use super::*;

    fn judgment(top: &[&str], gold: &[&str]) -> RetrievalJudgment {
        RetrievalJudgment {
            query_id: "q".into(),
            topn_ids: top.iter().map(|s| s.to_string()).collect(),
            gold_hits: gold.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn recall_examples() {
        assert_eq!(recall_at_n(&[judgment(&["d1"], &["d1"])], 1).unwrap(), 1.0);
        assert_eq!(
            recall_at_n(&[judgment(&["d1", "x"], &["d1", "d2", "d3"])], 1).unwrap(),
            1.0
        );
        let two = [
            judgment(&["a", "x", "y"], &["a", "b"]),
            judgment(&["x", "y", "z"], &["c"]),
        ];
        assert_eq!(recall_at_n(&two, 3).unwrap(), 0.25);
        assert!(recall_at_n(&two, 0).is_err());
    }

    #[test]
    fn empty_gold_excluded() {
        let js = [judgment(&["a"], &["a"]), judgment(&["a"], &[])];
        assert_eq!(recall_at_n(&js, 1).unwrap(), 1.0);
        assert_eq!(excluded_from_recall(&js), 1);
        assert_eq!(recall_at_n(&js[1..], 1).unwrap(), 0.0);
    }

    #[test]
    fn f1_examples() {
        assert_eq!(token_f1("Paris", "paris"), 1.0);
        assert!((token_f1("in paris france", "paris france") - 0.8).abs() < 1e-12);
        assert_eq!(token_f1("", "x"), 0.0);
        assert_eq!(token_f1("", ""), 1.0);
        assert_eq!(token_f1("The cat!", "a cat"), 1.0);
        assert_eq!(token_f1("dog", "cat"), 0.0);
    }

    #[test]
    fn bleu_examples() {
        assert_eq!(bleu1("the cat sat", "the cat sat"), 1.0);
        let expected = (1.0f64 - 1.5).exp();
        assert!((bleu1("the cat", "the cat sat") - expected).abs() < 1e-12);
        assert!((bleu1("the cat", "the cat sat") - 0.60653).abs() < 1e-5);
        assert_eq!(bleu1("dog", "cat"), 0.0);
        assert_eq!(bleu1("", "cat"), 0.0);
        // clipping: "the" may only match once
        assert_eq!(bleu1("the the the", "the cat sat"), 1.0 / 3.0);
    }
}
