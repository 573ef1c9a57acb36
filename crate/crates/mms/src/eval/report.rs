//! Evaluation reports: per-query rows plus per-category and overall averages.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{MmsError, Result};
use crate::model::Category;
use crate::store::EmbeddingStrategy;

pub const REPORT_SCHEMA: &str = "mms-report/1";

/// Recall cut-offs reported for every run.
pub const RECALL_CUTOFFS: [usize; 3] = [1, 3, 5];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMetadata {
    /// `mms` or `naive-rag`.
    pub method: String,
    /// Human-readable run name, e.g. `w/o Cog&Epi`.
    pub label: String,
    pub retrieval_comp: String,
    pub contextual_comp: String,
    pub strategy: EmbeddingStrategy,
    pub k: usize,
    pub embedder: String,
    pub extractor: String,
    pub chat: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRow {
    pub query_id: String,
    pub category: Category,
    pub question: String,
    pub gold_answer: String,
    pub answer: String,
    /// Retrieved record ids in rank order, `max(k, 5)` deep.
    pub retrieved: Vec<String>,
    /// Records whose source turns intersect the gold evidence.
    pub gold_records: Vec<String>,
    pub recall_1: Option<f64>,
    pub recall_3: Option<f64>,
    pub recall_5: Option<f64>,
    pub f1: f64,
    pub bleu1: f64,
    /// Fraction of gold records present in the answer context.
    pub context_coverage: Option<f64>,
}

impl QueryRow {
    pub fn recall(&self, n: usize) -> Option<f64> {
        match n {
            1 => self.recall_1,
            3 => self.recall_3,
            5 => self.recall_5,
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub queries: usize,
    /// Queries with gold evidence, i.e. the recall denominator.
    pub recall_queries: usize,
    pub recall_1: f64,
    pub recall_3: f64,
    pub recall_5: f64,
    pub f1: f64,
    pub bleu1: f64,
}

fn mean(values: impl IntoIterator<Item = f64>) -> (f64, usize) {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        (0.0, 0)
    } else {
        (sum / n as f64, n)
    }
}

impl ScoreSummary {
    /// Average over rows. Recall skips rows without gold evidence.
    pub fn from_rows<'a>(rows: impl IntoIterator<Item = &'a QueryRow> + Clone) -> Self {
        let (f1, queries) = mean(rows.clone().into_iter().map(|r| r.f1));
        let (bleu1, _) = mean(rows.clone().into_iter().map(|r| r.bleu1));
        let (recall_1, recall_queries) = mean(rows.clone().into_iter().filter_map(|r| r.recall_1));
        let (recall_3, _) = mean(rows.clone().into_iter().filter_map(|r| r.recall_3));
        let (recall_5, _) = mean(rows.into_iter().filter_map(|r| r.recall_5));
        Self {
            queries,
            recall_queries,
            recall_1,
            recall_3,
            recall_5,
            f1,
            bleu1,
        }
    }

    /// Unweighted mean over category summaries. Categories without queries
    /// are skipped; recall also skips categories without gold evidence.
    pub fn macro_over<'a>(summaries: impl IntoIterator<Item = &'a ScoreSummary> + Clone) -> Self {
        let with_queries = || summaries.clone().into_iter().filter(|s| s.queries > 0);
        let with_gold = || {
            summaries
                .clone()
                .into_iter()
                .filter(|s| s.recall_queries > 0)
        };
        Self {
            queries: with_queries().map(|s| s.queries).sum(),
            recall_queries: with_gold().map(|s| s.recall_queries).sum(),
            recall_1: mean(with_gold().map(|s| s.recall_1)).0,
            recall_3: mean(with_gold().map(|s| s.recall_3)).0,
            recall_5: mean(with_gold().map(|s| s.recall_5)).0,
            f1: mean(with_queries().map(|s| s.f1)).0,
            bleu1: mean(with_queries().map(|s| s.bleu1)).0,
        }
    }

    pub fn recall(&self, n: usize) -> Option<f64> {
        match n {
            1 => Some(self.recall_1),
            3 => Some(self.recall_3),
            5 => Some(self.recall_5),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: String,
    pub metadata: RunMetadata,
    /// Keyed by category label.
    pub categories: BTreeMap<String, ScoreSummary>,
    /// Mean over queries.
    pub average: ScoreSummary,
    /// Mean over categories.
    pub macro_average: ScoreSummary,
    /// Queries left out of recall because they have no gold evidence.
    pub excluded_from_recall: usize,
    pub rows: Vec<QueryRow>,
}

impl EvalReport {
    pub fn from_rows(metadata: RunMetadata, rows: Vec<QueryRow>) -> Self {
        let categories: BTreeMap<String, ScoreSummary> = Category::ALL
            .iter()
            .map(|cat| {
                let summary = ScoreSummary::from_rows(rows.iter().filter(|r| r.category == *cat));
                (cat.label().to_string(), summary)
            })
            .collect();
        let average = ScoreSummary::from_rows(rows.iter());
        let macro_average = ScoreSummary::macro_over(categories.values());
        let excluded_from_recall = rows.iter().filter(|r| r.recall_1.is_none()).count();
        Self {
            schema: REPORT_SCHEMA.to_string(),
            metadata,
            categories,
            average,
            macro_average,
            excluded_from_recall,
            rows,
        }
    }

    /// Recompute every summary from the rows and compare within `tol`.
    pub fn check_consistency(&self, tol: f64) -> Result<()> {
        let fresh = Self::from_rows(self.metadata.clone(), self.rows.clone());
        let close = |a: &ScoreSummary, b: &ScoreSummary| {
            a.queries == b.queries
                && a.recall_queries == b.recall_queries
                && [
                    (a.recall_1, b.recall_1),
                    (a.recall_3, b.recall_3),
                    (a.recall_5, b.recall_5),
                    (a.f1, b.f1),
                    (a.bleu1, b.bleu1),
                ]
                .iter()
                .all(|(x, y)| (x - y).abs() <= tol)
        };
        let mut bad = Vec::new();
        if !close(&self.average, &fresh.average) {
            bad.push("average".to_string());
        }
        if !close(&self.macro_average, &fresh.macro_average) {
            bad.push("macro_average".to_string());
        }
        for (name, summary) in &fresh.categories {
            if !self.categories.get(name).is_some_and(|s| close(s, summary)) {
                bad.push(name.clone());
            }
        }
        if self.excluded_from_recall != fresh.excluded_from_recall {
            bad.push("excluded_from_recall".to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(MmsError::InvalidArgument(format!(
                "report summaries disagree with rows: {}",
                bad.join(", ")
            )))
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: Self = serde_json::from_str(text)?;
        if report.schema != REPORT_SCHEMA {
            return Err(MmsError::Version {
                found: report.schema,
                expected: REPORT_SCHEMA.to_string(),
            });
        }
        Ok(report)
    }

    /// Aligned text table: one line per category, then both averages.
    /// Scores are percentages.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} [{}]", self.metadata.label, self.metadata.method);
        let _ = writeln!(
            out,
            "{:<14} {:>5} {:>7} {:>7} {:>7} {:>7} {:>7}",
            "Category", "N", "R@1", "R@3", "R@5", "F1", "BLEU-1"
        );
        let mut line = |name: &str, s: &ScoreSummary| {
            let _ = writeln!(
                out,
                "{:<14} {:>5} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>7.2}",
                name,
                s.queries,
                100.0 * s.recall_1,
                100.0 * s.recall_3,
                100.0 * s.recall_5,
                100.0 * s.f1,
                100.0 * s.bleu1
            );
        };
        for cat in Category::ALL {
            if let Some(s) = self.categories.get(cat.label()) {
                line(cat.label(), s);
            }
        }
        line("Average", &self.average);
        line("Macro Average", &self.macro_average);
        if self.excluded_from_recall > 0 {
            let _ = writeln!(
                out,
                "({} queries without gold evidence excluded from recall)",
                self.excluded_from_recall
            );
        }
        out
    }
}
