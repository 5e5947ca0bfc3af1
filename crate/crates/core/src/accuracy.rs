//! ROUGE-1/2/L and mean output length over (candidate, reference) pairs.
//!
//! Tokens are lowercase alphanumeric runs. Scores are plain F1 without
//! stemming or sentence splitting.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par;
use crate::scenario::QueryMeasurement;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AccuracyError {
    #[error("cannot pair {outputs} outputs with {references} references")]
    PairingMismatch { outputs: usize, references: usize },
    #[error("no pairs to evaluate")]
    Empty,
}

/// ROUGE values are F1 scaled to [0, 100].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub rouge1: f64,
    pub rouge2: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
    pub tokens_per_sample: f64,
}

impl AccuracyReport {
    /// Renders the report in the dataset's `metrics.accuracy` text form.
    pub fn to_metric_text(&self) -> String {
        format!(
            "ROUGE1: {:.4}  ROUGE2: {:.4}  ROUGEL: {:.4} TOKENS_PER_SAMPLE: {:.1}",
            self.rouge1, self.rouge2, self.rouge_l, self.tokens_per_sample
        )
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Harmonic mean of precision and recall. `2PR/(P+R)` reduces to
/// `2·overlap/(|cand|+|ref|)`, which rounds once.
fn f1(overlap: usize, candidate_total: usize, reference_total: usize) -> f64 {
    if overlap == 0 || candidate_total == 0 || reference_total == 0 {
        return 0.0;
    }
    2.0 * overlap as f64 / (candidate_total + reference_total) as f64
}

fn ngram_counts<T: AsRef<str>>(tokens: &[T], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            let key: Vec<&str> = w.iter().map(AsRef::as_ref).collect();
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    counts
}

/// ROUGE-N F1 with clipped n-gram counts. `n == 0` scores 0.
pub fn rouge_n<T: AsRef<str>>(candidate: &[T], reference: &[T], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let overlap: usize = cand
        .iter()
        .map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0)))
        .sum();
    f1(
        overlap,
        candidate.len().saturating_sub(n - 1),
        reference.len().saturating_sub(n - 1),
    )
}

/// Length of the longest common subsequence, O(|a|·|b|) time, O(|b|) space.
pub fn lcs_len<T: AsRef<str>>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x.as_ref() == y.as_ref() {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l<T: AsRef<str>>(candidate: &[T], reference: &[T]) -> f64 {
    f1(
        lcs_len(candidate, reference),
        candidate.len(),
        reference.len(),
    )
}

/// Per-pair F1 scores in [0, 1]: `[rouge1, rouge2, rougeL]`.
pub fn score_pair(candidate: &str, reference: &str) -> [f64; 3] {
    let c = tokenize(candidate);
    let r = tokenize(reference);
    [rouge_n(&c, &r, 1), rouge_n(&c, &r, 2), rouge_l(&c, &r)]
}

/// Scores every pair, on the rayon pool when the `parallel` feature is on.
pub fn score_pairs(pairs: &[(String, String)]) -> Vec<[f64; 3]> {
    par::map(pairs, |(c, r)| score_pair(c, r))
}

pub fn score_pairs_sequential(pairs: &[(String, String)]) -> Vec<[f64; 3]> {
    par::map_sequential(pairs, |(c, r)| score_pair(c, r))
}

fn mean_scaled(scores: &[[f64; 3]], k: usize) -> f64 {
    100.0 * scores.iter().map(|s| s[k]).sum::<f64>() / scores.len() as f64
}

/// Averages per-pair scores arithmetically and scales by 100;
/// `tokens_per_sample` is the mean `output_tokens`.
pub fn evaluate_run(
    measurements: &[QueryMeasurement],
    references: &[String],
) -> Result<AccuracyReport, AccuracyError> {
    if measurements.len() != references.len() {
        return Err(AccuracyError::PairingMismatch {
            outputs: measurements.len(),
            references: references.len(),
        });
    }
    if measurements.is_empty() {
        return Err(AccuracyError::Empty);
    }
    let pairs: Vec<(String, String)> = measurements
        .iter()
        .zip(references)
        .map(|(m, r)| (m.output_text.clone(), r.clone()))
        .collect();
    let scores = score_pairs(&pairs);
    let tokens = measurements.iter().map(|m| m.output_tokens).sum::<u64>() as f64;
    Ok(AccuracyReport {
        rouge1: mean_scaled(&scores, 0),
        rouge2: mean_scaled(&scores, 1),
        rouge_l: mean_scaled(&scores, 2),
        tokens_per_sample: tokens / measurements.len() as f64,
    })
}

/// Parses a references file: one JSON object per line with `id` and
/// `reference` (or `text`), or `id<TAB>text` lines.
pub fn parse_references(text: &str) -> Result<HashMap<u64, String>, String> {
    let mut out = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (id, reference) = if line.starts_with('{') {
            let v: serde_json::Value =
                serde_json::from_str(line).map_err(|e| format!("line {}: {e}", lineno + 1))?;
            let id = v.get("id").and_then(|x| x.as_u64());
            let r = v
                .get("reference")
                .or_else(|| v.get("text"))
                .and_then(|x| x.as_str());
            match (id, r) {
                (Some(id), Some(r)) => (id, r.to_string()),
                _ => {
                    return Err(format!(
                        "line {}: expected `id` and `reference`",
                        lineno + 1
                    ))
                }
            }
        } else {
            let (id, r) = line
                .split_once('\t')
                .ok_or_else(|| format!("line {}: expected `id<TAB>text`", lineno + 1))?;
            let id = id
                .trim()
                .parse()
                .map_err(|_| format!("line {}: bad id `{id}`", lineno + 1))?;
            (id, r.to_string())
        };
        out.insert(id, reference);
    }
    Ok(out)
}
