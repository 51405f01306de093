//! ROUGE-1/2/L with macro averaging over a corpus.
//!
//! Text is scored after lowercasing and whitespace tokenization; see
//! [`normalize`].

use std::collections::HashMap;
use std::fmt::Write as _;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    /// Score from an overlap count and the two totals. Empty totals give 0.
    pub fn from_counts(overlap: usize, candidate: usize, reference: usize) -> Self {
        let ratio = |total: usize| {
            if total == 0 {
                0.0
            } else {
                overlap as f64 / total as f64
            }
        };
        Self::from_pr(ratio(candidate), ratio(reference))
    }

    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

/// Lowercase and split on whitespace.
pub fn normalize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// ROUGE-N with clipped n-gram counts.
///
/// # Panics
/// If `n == 0`.
pub fn rouge_n<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> RougeScore {
    assert!(n >= 1, "ROUGE-N needs n >= 1");
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let overlap = cand
        .iter()
        .map(|(gram, &c)| c.min(refs.get(gram).copied().unwrap_or(0)))
        .sum();
    RougeScore::from_counts(
        overlap,
        cand.values().sum(),
        refs.values().sum(),
    )
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l<T: Eq>(candidate: &[T], reference: &[T]) -> RougeScore {
    RougeScore::from_counts(
        lcs_len(candidate, reference),
        candidate.len(),
        reference.len(),
    )
}

/// Mean ROUGE-1, ROUGE-2 and ROUGE-L.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RougeReport {
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    pub rouge_l: RougeScore,
}

fn mean(scores: impl Iterator<Item = RougeScore>, n: usize) -> RougeScore {
    let mut sum = RougeScore::default();
    for s in scores {
        sum.precision += s.precision;
        sum.recall += s.recall;
        sum.f1 += s.f1;
    }
    let n = n as f64;
    RougeScore {
        precision: sum.precision / n,
        recall: sum.recall / n,
        f1: sum.f1 / n,
    }
}

/// Unweighted mean of per-pair scores over `(candidate, reference)` pairs.
pub fn corpus_rouge<T: Eq + Hash>(pairs: &[(Vec<T>, Vec<T>)]) -> Result<RougeReport> {
    if pairs.is_empty() {
        return Err(Error::Argument("no candidate/reference pairs".into()));
    }
    let n = pairs.len();
    Ok(RougeReport {
        rouge1: mean(pairs.iter().map(|(c, r)| rouge_n(c, r, 1)), n),
        rouge2: mean(pairs.iter().map(|(c, r)| rouge_n(c, r, 2)), n),
        rouge_l: mean(pairs.iter().map(|(c, r)| rouge_l(c, r)), n),
    })
}

/// [`corpus_rouge`] over raw text, normalized first.
pub fn corpus_rouge_text<S: AsRef<str>>(pairs: &[(S, S)]) -> Result<RougeReport> {
    let tokenized: Vec<(Vec<String>, Vec<String>)> = pairs
        .iter()
        .map(|(c, r)| (normalize(c.as_ref()), normalize(r.as_ref())))
        .collect();
    corpus_rouge(&tokenized)
}

/// One row of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemResult {
    pub system: String,
    pub report: RougeReport,
    /// Left empty unless supplied by an external scorer.
    pub bert_score: Option<f64>,
}

const METRICS: [&str; 3] = ["R1", "R2", "RL"];

fn triples(r: &RougeReport) -> [RougeScore; 3] {
    [r.rouge1, r.rouge2, r.rouge_l]
}

/// Plain-text table: one row per system, F/P/R for each ROUGE variant.
pub fn format_table(rows: &[SystemResult]) -> String {
    let width = rows
        .iter()
        .map(|r| r.system.len())
        .max()
        .unwrap_or(0)
        .max("System".len());
    let mut out = format!("{:<width$}", "System");
    for m in METRICS {
        for k in ["F", "P", "R"] {
            let _ = write!(out, " {:>7}", format!("{m}-{k}"));
        }
    }
    out.push_str(" BertScore\n");
    for row in rows {
        let _ = write!(out, "{:<width$}", row.system);
        for s in triples(&row.report) {
            for v in [s.f1, s.precision, s.recall] {
                let _ = write!(out, " {v:>7.4}");
            }
        }
        match row.bert_score {
            Some(b) => {
                let _ = writeln!(out, " {b:>9.4}");
            }
            None => out.push_str("         -\n"),
        }
    }
    out
}

pub fn table_csv(rows: &[SystemResult]) -> String {
    let mut out = String::from("system");
    for m in METRICS {
        for k in ["f1", "precision", "recall"] {
            let _ = write!(out, ",{}_{k}", m.to_lowercase());
        }
    }
    out.push_str(",bert_score\n");
    for row in rows {
        out.push_str(&row.system);
        for s in triples(&row.report) {
            for v in [s.f1, s.precision, s.recall] {
                let _ = write!(out, ",{v}");
            }
        }
        out.push(',');
        if let Some(b) = row.bert_score {
            let _ = write!(out, "{b}");
        }
        out.push('\n');
    }
    out
}
