//! Text-overlap metrics and vector similarity.
//!
//! All ROUGE variants report precision, recall and f1. BLEU is sentence-level
//! with add-ε smoothing on orders that have no overlap.

use std::collections::HashMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smoothing constant for BLEU orders with zero overlap.
pub const BLEU_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenMode {
    /// Runs of alphanumeric characters, lowercased.
    #[default]
    Word,
    /// One token per Unicode scalar, whitespace dropped.
    Char,
}

impl FromStr for TokenMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "word" => Ok(TokenMode::Word),
            "char" => Ok(TokenMode::Char),
            other => Err(format!("unknown token mode `{other}` (expected word|char)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    fn from_counts(overlap: usize, cand_total: usize, ref_total: usize) -> Self {
        if cand_total == 0 || ref_total == 0 {
            return Self::default();
        }
        let precision = overlap as f64 / cand_total as f64;
        let recall = overlap as f64 / ref_total as f64;
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

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimilarityError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("cosine of a zero vector is undefined")]
    ZeroVector,
}

pub fn tokenize(text: &str, mode: TokenMode) -> Vec<String> {
    match mode {
        TokenMode::Word => text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .collect(),
        TokenMode::Char => text
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(String::from)
            .collect(),
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Clipped overlap and candidate total for one n-gram order.
fn clipped_overlap(cand: &[String], reference: &[String], n: usize) -> (usize, usize, usize) {
    let c = ngram_counts(cand, n);
    let r = ngram_counts(reference, n);
    let overlap = c
        .iter()
        .map(|(gram, &count)| count.min(r.get(gram).copied().unwrap_or(0)))
        .sum();
    (overlap, c.values().sum(), r.values().sum())
}

pub fn rouge_n(candidate: &str, reference: &str, n: usize, mode: TokenMode) -> RougeScore {
    assert!(n >= 1, "rouge_n requires n >= 1");
    let cand = tokenize(candidate, mode);
    let refr = tokenize(reference, mode);
    let (overlap, ct, rt) = clipped_overlap(&cand, &refr, n);
    RougeScore::from_counts(overlap, ct, rt)
}

pub(crate) fn lcs_len(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
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

pub fn rouge_l(candidate: &str, reference: &str, mode: TokenMode) -> RougeScore {
    let cand = tokenize(candidate, mode);
    let refr = tokenize(reference, mode);
    RougeScore::from_counts(lcs_len(&cand, &refr), cand.len(), refr.len())
}

/// Sentence BLEU: geometric mean of modified n-gram precisions for orders
/// `1..=max_n`, times the brevity penalty `min(1, exp(1 - |ref|/|cand|))`.
pub fn bleu(candidate: &str, reference: &str, max_n: usize, mode: TokenMode) -> f64 {
    let cand = tokenize(candidate, mode);
    let refr = tokenize(reference, mode);
    if cand.is_empty() || max_n == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let (overlap, total, _) = clipped_overlap(&cand, &refr, n);
        let p = if overlap == 0 {
            BLEU_EPSILON / (total as f64 + BLEU_EPSILON)
        } else {
            overlap as f64 / total as f64
        };
        log_sum += p.ln();
    }
    let bp = (1.0 - refr.len() as f64 / cand.len() as f64).exp().min(1.0);
    (bp * (log_sum / max_n as f64).exp()).clamp(0.0, 1.0)
}

/// `exp(mean(f1 of ROUGE-1, ROUGE-2, ROUGE-L)) - 1`, in `[0, e - 1]`.
pub fn rouge_sum(candidate: &str, reference: &str, mode: TokenMode) -> f64 {
    rouge_sum_from_f1s(
        rouge_n(candidate, reference, 1, mode).f1,
        rouge_n(candidate, reference, 2, mode).f1,
        rouge_l(candidate, reference, mode).f1,
    )
}

pub fn rouge_sum_from_f1s(r1: f64, r2: f64, rl: f64) -> f64 {
    ((r1 + r2 + rl) / 3.0).exp() - 1.0
}

pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64, SimilarityError> {
    if a.len() != b.len() {
        return Err(SimilarityError::DimensionMismatch(a.len(), b.len()));
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(SimilarityError::ZeroVector);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}
