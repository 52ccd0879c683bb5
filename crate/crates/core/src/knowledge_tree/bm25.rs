//! Okapi BM25 over word tokens.
//!
//! ```text
//! score(d, q) = Σ_{t ∈ q} idf(t) · tf·(k1 + 1) / (tf + k1·(1 − b + b·|d|/avgdl))
//! idf(t)      = ln((N − df + 0.5) / (df + 0.5) + 1)
//! ```
//!
//! The `+ 1` inside the log keeps every idf positive, so a document sharing
//! no query token scores exactly 0.

use std::collections::HashMap;

use super::TreeError;
use crate::metrics::{tokenize, TokenMode};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone)]
pub struct Bm25Index {
    ids: Vec<String>,
    term_freqs: Vec<HashMap<String, usize>>,
    doc_lens: Vec<usize>,
    doc_freq: HashMap<String, usize>,
    avg_len: f64,
    params: Bm25Params,
}

impl Bm25Index {
    pub fn new<'a>(
        docs: impl IntoIterator<Item = (&'a str, &'a str)>,
        params: Bm25Params,
    ) -> Result<Self, TreeError> {
        let mut ids = Vec::new();
        let mut term_freqs = Vec::new();
        let mut doc_lens = Vec::new();
        let mut doc_freq: HashMap<String, usize> = HashMap::new();
        for (id, text) in docs {
            let tokens = tokenize(text, TokenMode::Word);
            let mut tf: HashMap<String, usize> = HashMap::new();
            for t in &tokens {
                *tf.entry(t.clone()).or_default() += 1;
            }
            for t in tf.keys() {
                *doc_freq.entry(t.clone()).or_default() += 1;
            }
            ids.push(id.to_owned());
            doc_lens.push(tokens.len());
            term_freqs.push(tf);
        }
        if ids.is_empty() {
            return Err(TreeError::EmptyCorpus);
        }
        let avg_len = doc_lens.iter().sum::<usize>() as f64 / ids.len() as f64;
        Ok(Self {
            ids,
            term_freqs,
            doc_lens,
            doc_freq,
            avg_len,
            params,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.ids.len() as f64;
        let df = self.doc_freq.get(term).copied().unwrap_or(0) as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    fn score_doc(&self, d: usize, query: &[String]) -> f64 {
        let Bm25Params { k1, b } = self.params;
        // all-empty collections have avg_len 0; length normalisation is then moot
        let norm = if self.avg_len > 0.0 {
            1.0 - b + b * self.doc_lens[d] as f64 / self.avg_len
        } else {
            1.0
        };
        query
            .iter()
            .filter_map(|t| {
                let tf = *self.term_freqs[d].get(t)? as f64;
                Some(self.idf(t) * tf * (k1 + 1.0) / (tf + k1 * norm))
            })
            .sum()
    }

    /// Top `k` `(id, score)` pairs, score descending then id ascending.
    pub fn search(&self, question: &str, k: usize) -> Result<Vec<(String, f64)>, TreeError> {
        if question.trim().is_empty() {
            return Err(TreeError::EmptyQuestion);
        }
        let query = tokenize(question, TokenMode::Word);
        let mut scored: Vec<(usize, f64)> = (0..self.ids.len())
            .map(|d| (d, self.score_doc(d, &query)))
            .collect();
        scored.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.ids[a.0].cmp(&self.ids[b.0]))
        });
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(d, s)| (self.ids[d].clone(), s))
            .collect())
    }
}

pub fn bm25_retrieve(
    docs: &[(String, String)],
    question: &str,
    k: usize,
    params: Bm25Params,
) -> Result<Vec<(String, f64)>, TreeError> {
    if question.trim().is_empty() {
        return Err(TreeError::EmptyQuestion);
    }
    Bm25Index::new(docs.iter().map(|(i, t)| (i.as_str(), t.as_str())), params)?.search(question, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn docs(items: &[(&str, &str)]) -> Vec<(String, String)> {
        items
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect()
    }

    #[test]
    fn sole_match_ranks_first() {
        let d = docs(&[
            ("d1", "red blue"),
            ("d2", "green alpha"),
            ("d3", "blue red"),
        ]);
        let r = bm25_retrieve(&d, "alpha", 3, Bm25Params::default()).unwrap();
        assert_eq!(r[0].0, "d2");
        assert!(r[0].1 > 0.0);
        assert_eq!(r[1].1, 0.0);
    }

    #[test]
    fn hand_computed_scores() {
        // N = 3, df(alpha) = 1, every doc has length 3 = avgdl
        // idf = ln(2.5/1.5 + 1) = ln(8/3)
        let d = docs(&[
            ("d1", "alpha beta gamma"),
            ("d2", "beta gamma delta"),
            ("d3", "gamma delta epsilon"),
        ]);
        let r = bm25_retrieve(&d, "alpha", 1, Bm25Params::default()).unwrap();
        assert!((r[0].1 - 0.980_829_253_011_726_2).abs() < 1e-12);

        // tf = 2: idf · 2·2.2 / (2 + 1.2)
        let d = docs(&[
            ("d1", "alpha alpha beta"),
            ("d2", "beta gamma delta"),
            ("d3", "gamma delta epsilon"),
        ]);
        let r = bm25_retrieve(&d, "alpha", 1, Bm25Params::default()).unwrap();
        assert!((r[0].1 - 1.348_640_222_891_123_6).abs() < 1e-12);
    }

    #[test]
    fn no_overlap_yields_k_zeros() {
        let d = docs(&[("b", "x y"), ("a", "y z"), ("c", "z")]);
        let r = bm25_retrieve(&d, "nothing here", 2, Bm25Params::default()).unwrap();
        assert_eq!(r, vec![("a".to_string(), 0.0), ("b".to_string(), 0.0)]);
    }

    #[test]
    fn errors() {
        let d = docs(&[("a", "x")]);
        assert!(matches!(
            bm25_retrieve(&d, " ", 1, Bm25Params::default()),
            Err(TreeError::EmptyQuestion)
        ));
        assert!(matches!(
            bm25_retrieve(&[], "x", 1, Bm25Params::default()),
            Err(TreeError::EmptyCorpus)
        ));
    }

    proptest! {
        #[test]
        fn zero_overlap_is_exactly_zero_and_sorted(
            texts in prop::collection::vec("[a-e ]{0,20}", 1..8),
            q in "[a-g ]{1,10}",
        ) {
            prop_assume!(!q.trim().is_empty());
            let d: Vec<(String, String)> = texts.iter().enumerate().map(|(i, t)| (format!("d{i}"), t.clone())).collect();
            let r = bm25_retrieve(&d, &q, d.len(), Bm25Params::default()).unwrap();
            prop_assert!(r.windows(2).all(|p| p[0].1 >= p[1].1));
            let qt = tokenize(&q, TokenMode::Word);
            for (id, score) in &r {
                let text = &d.iter().find(|x| &x.0 == id).unwrap().1;
                let dt = tokenize(text, TokenMode::Word);
                if !qt.iter().any(|t| dt.contains(t)) {
                    prop_assert_eq!(*score, 0.0);
                } else {
                    prop_assert!(*score > 0.0);
                }
            }
        }
    }
}
