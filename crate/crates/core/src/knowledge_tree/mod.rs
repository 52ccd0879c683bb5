//! The statute → case knowledge tree and its retrieval variants.
//!
//! A virtual root fans out to statute nodes; every case is linked natively
//! to its most similar statute, and statutes with too few links are topped
//! up with the most similar cases they are not yet linked to. Retrieval picks
//! the top statutes for a question, then the top cases among each statute's
//! links.

pub mod bm25;
pub mod index;

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::embed::{EmbedError, EmbeddingProvider};
use crate::corpus::{Case, Statute, UNIT_NORM_TOL};
use crate::metrics::cosine;

pub use bm25::{bm25_retrieve, Bm25Index, Bm25Params};

pub const DEFAULT_MIN_DEGREE: usize = 5;
pub const DEFAULT_TOP_STATUTES: usize = 1;
pub const DEFAULT_TOP_CASES: usize = 3;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("cannot build a tree without statutes")]
    EmptyStatuteSet,
    #[error("embedding `{id}` failed: {source}")]
    EmbeddingFailure {
        id: String,
        #[source]
        source: EmbedError,
    },
    #[error("unknown statute `{0}`")]
    UnknownStatute(String),
    #[error("question is empty")]
    EmptyQuestion,
    #[error("document collection is empty")]
    EmptyCorpus,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt index: {0}")]
    CorruptIndex(String),
    #[error("index version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub text: String,
    pub embedding: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    /// Ordinal into [`KnowledgeTree::cases`].
    pub case: usize,
    pub supplemented: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeTree {
    pub(crate) dim: usize,
    pub(crate) min_degree: usize,
    pub(crate) statutes: Vec<Node>,
    pub(crate) cases: Vec<Node>,
    /// Parallel to `statutes`: native links first, supplemented appended.
    pub(crate) links: Vec<Vec<Link>>,
    statute_ids: HashMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedKnowledge {
    pub statute: Statute,
    pub statute_score: f64,
    /// Sorted by similarity to the question, descending.
    pub cases: Vec<Case>,
    pub scores: Vec<f64>,
}

/// Order by score descending, then id ascending.
fn rank(a: (f64, &str), b: (f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

fn sim(a: &[f32], b: &[f32]) -> f64 {
    cosine(a, b).unwrap_or(0.0)
}

fn embed_all(
    items: &[(&str, &str, Option<&Vec<f32>>)],
    embedder: &dyn EmbeddingProvider,
) -> Result<Vec<Vec<f32>>, TreeError> {
    items
        .par_iter()
        .map(|(id, text, stored)| match stored {
            Some(v) => Ok((*v).clone()),
            None => embedder
                .embed(text)
                .map_err(|source| TreeError::EmbeddingFailure {
                    id: id.to_string(),
                    source,
                }),
        })
        .collect()
}

fn embed_question(question: &str, embedder: &dyn EmbeddingProvider) -> Result<Vec<f32>, TreeError> {
    if question.trim().is_empty() {
        return Err(TreeError::EmptyQuestion);
    }
    embedder
        .embed(question)
        .map_err(|source| TreeError::EmbeddingFailure {
            id: "<question>".into(),
            source,
        })
}

fn to_nodes<'a>(
    records: impl Iterator<Item = (&'a str, &'a str, Option<&'a Vec<f32>>)>,
    embedder: &dyn EmbeddingProvider,
) -> Result<Vec<Node>, TreeError> {
    let items: Vec<_> = records.collect();
    let embeddings = embed_all(&items, embedder)?;
    Ok(items
        .into_iter()
        .zip(embeddings)
        .map(|((id, text, _), embedding)| Node {
            id: id.to_owned(),
            text: text.to_owned(),
            embedding,
        })
        .collect())
}

/// Top `k` node ordinals among `candidates` by cosine to `query`.
fn top_k(
    query: &[f32],
    nodes: &[Node],
    candidates: impl Iterator<Item = usize>,
    k: usize,
) -> Vec<(usize, f64)> {
    let mut scored: Vec<(usize, f64)> = candidates
        .map(|i| (i, sim(query, &nodes[i].embedding)))
        .collect();
    scored.sort_by(|a, b| rank((a.1, &nodes[a.0].id), (b.1, &nodes[b.0].id)));
    scored.truncate(k);
    scored
}

impl KnowledgeTree {
    pub fn build(
        statutes: &[Statute],
        cases: &[Case],
        embedder: &dyn EmbeddingProvider,
        min_degree: usize,
    ) -> Result<Self, TreeError> {
        if statutes.is_empty() {
            return Err(TreeError::EmptyStatuteSet);
        }
        let statute_nodes = to_nodes(
            statutes
                .iter()
                .map(|s| (s.id.as_str(), s.text.as_str(), s.embedding.as_ref())),
            embedder,
        )?;
        let case_nodes = to_nodes(
            cases
                .iter()
                .map(|c| (c.id.as_str(), c.text.as_str(), c.embedding.as_ref())),
            embedder,
        )?;

        let dim = statute_nodes[0].embedding.len();
        for n in statute_nodes.iter().chain(&case_nodes) {
            if n.embedding.len() != dim {
                return Err(TreeError::EmbeddingFailure {
                    id: n.id.clone(),
                    source: EmbedError::DimensionMismatch {
                        expected: dim,
                        got: n.embedding.len(),
                    },
                });
            }
        }

        let native: Vec<usize> = case_nodes
            .par_iter()
            .map(|c| top_k(&c.embedding, &statute_nodes, 0..statute_nodes.len(), 1)[0].0)
            .collect();
        let mut links = vec![Vec::new(); statute_nodes.len()];
        for (case, &statute) in native.iter().enumerate() {
            links[statute].push(Link {
                case,
                supplemented: false,
            });
        }

        let mut tree = Self {
            dim,
            min_degree,
            statute_ids: index_ids(&statute_nodes),
            statutes: statute_nodes,
            cases: case_nodes,
            links,
        };
        for s in 0..tree.statutes.len() {
            if tree.links[s].len() < min_degree {
                let id = tree.statutes[s].id.clone();
                tree.supplement_links(&id, min_degree)?;
            }
        }
        Ok(tree)
    }

    /// Top up `statute_id` to `min_degree` links with the most similar cases
    /// not yet linked to it. Existing links are never removed.
    pub fn supplement_links(
        &mut self,
        statute_id: &str,
        min_degree: usize,
    ) -> Result<&[Link], TreeError> {
        let s = *self
            .statute_ids
            .get(statute_id)
            .ok_or_else(|| TreeError::UnknownStatute(statute_id.to_owned()))?;
        let need = min_degree.saturating_sub(self.links[s].len());
        if need > 0 {
            let linked: HashSet<usize> = self.links[s].iter().map(|l| l.case).collect();
            let extra = top_k(
                &self.statutes[s].embedding,
                &self.cases,
                (0..self.cases.len()).filter(|c| !linked.contains(c)),
                need,
            );
            self.links[s].extend(extra.into_iter().map(|(case, _)| Link {
                case,
                supplemented: true,
            }));
        }
        Ok(&self.links[s])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn min_degree(&self) -> usize {
        self.min_degree
    }

    pub fn statutes(&self) -> &[Node] {
        &self.statutes
    }

    pub fn cases(&self) -> &[Node] {
        &self.cases
    }

    pub fn links(&self, statute_id: &str) -> Option<&[Link]> {
        self.statute_ids
            .get(statute_id)
            .map(|&s| self.links[s].as_slice())
    }

    pub fn supplemented_count(&self) -> usize {
        self.links
            .iter()
            .flatten()
            .filter(|l| l.supplemented)
            .count()
    }

    /// Statutes whose degree is below `min(min_degree, case count)`.
    pub fn deficient_statutes(&self) -> usize {
        let floor = self.min_degree.min(self.cases.len());
        self.links.iter().filter(|l| l.len() < floor).count()
    }

    fn statute_record(&self, s: usize) -> Statute {
        let n = &self.statutes[s];
        Statute {
            id: n.id.clone(),
            text: n.text.clone(),
            embedding: Some(n.embedding.clone()),
        }
    }

    fn case_record(&self, c: usize) -> Case {
        let n = &self.cases[c];
        Case {
            id: n.id.clone(),
            text: n.text.clone(),
            embedding: Some(n.embedding.clone()),
        }
    }

    /// Two-step retrieval: top `top_statutes` statutes by cosine to the
    /// question, then for each the top `top_cases` of its linked cases.
    pub fn retrieve(
        &self,
        question: &str,
        embedder: &dyn EmbeddingProvider,
        top_statutes: usize,
        top_cases: usize,
    ) -> Result<Vec<RetrievedKnowledge>, TreeError> {
        let q = embed_question(question, embedder)?;
        Ok(self.retrieve_embedded(&q, top_statutes, top_cases))
    }

    pub fn retrieve_embedded(
        &self,
        q: &[f32],
        top_statutes: usize,
        top_cases: usize,
    ) -> Vec<RetrievedKnowledge> {
        top_k(q, &self.statutes, 0..self.statutes.len(), top_statutes)
            .into_iter()
            .map(|(s, statute_score)| {
                let hits = top_k(
                    q,
                    &self.cases,
                    self.links[s].iter().map(|l| l.case),
                    top_cases,
                );
                RetrievedKnowledge {
                    statute: self.statute_record(s),
                    statute_score,
                    cases: hits.iter().map(|&(c, _)| self.case_record(c)).collect(),
                    scores: hits.iter().map(|&(_, sc)| sc).collect(),
                }
            })
            .collect()
    }

    /// Tree-free retrieval over the stored embeddings (ablation).
    pub fn flat_retrieve(
        &self,
        question: &str,
        embedder: &dyn EmbeddingProvider,
        top_cases: usize,
    ) -> Result<RetrievedKnowledge, TreeError> {
        let q = embed_question(question, embedder)?;
        let (s, statute_score) = top_k(&q, &self.statutes, 0..self.statutes.len(), 1)[0];
        let hits = top_k(&q, &self.cases, 0..self.cases.len(), top_cases);
        Ok(RetrievedKnowledge {
            statute: self.statute_record(s),
            statute_score,
            cases: hits.iter().map(|&(c, _)| self.case_record(c)).collect(),
            scores: hits.iter().map(|&(_, sc)| sc).collect(),
        })
    }

    /// Check every structural invariant; used after loading an index.
    pub fn validate(&self) -> Result<(), String> {
        if self.statutes.is_empty() {
            return Err("no statutes".into());
        }
        if self.links.len() != self.statutes.len() {
            return Err("link table does not match statute count".into());
        }
        let mut ids = HashSet::new();
        for n in &self.statutes {
            if !ids.insert(n.id.as_str()) {
                return Err(format!("duplicate statute id `{}`", n.id));
            }
        }
        let mut ids = HashSet::new();
        for n in &self.cases {
            if !ids.insert(n.id.as_str()) {
                return Err(format!("duplicate case id `{}`", n.id));
            }
        }
        for n in self.statutes.iter().chain(&self.cases) {
            if n.text.trim().is_empty() {
                return Err(format!("node `{}` has empty text", n.id));
            }
            if n.embedding.len() != self.dim {
                return Err(format!(
                    "node `{}` has dimension {}",
                    n.id,
                    n.embedding.len()
                ));
            }
            let norm = n
                .embedding
                .iter()
                .map(|&x| (x as f64).powi(2))
                .sum::<f64>()
                .sqrt();
            if !norm.is_finite() || (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(format!("node `{}` embedding norm {norm}", n.id));
            }
        }
        let mut covered = vec![false; self.cases.len()];
        let floor = self.min_degree.min(self.cases.len());
        for (s, list) in self.links.iter().enumerate() {
            let mut seen = HashSet::new();
            for l in list {
                if l.case >= self.cases.len() {
                    return Err(format!("link to case ordinal {} out of range", l.case));
                }
                if !seen.insert(l.case) {
                    return Err(format!("duplicate link under `{}`", self.statutes[s].id));
                }
                covered[l.case] = true;
            }
            if list.len() < floor {
                return Err(format!(
                    "statute `{}` has degree {}",
                    self.statutes[s].id,
                    list.len()
                ));
            }
        }
        if let Some(c) = covered.iter().position(|&c| !c) {
            return Err(format!("case `{}` is not linked", self.cases[c].id));
        }
        Ok(())
    }

    pub(crate) fn from_parts(
        dim: usize,
        min_degree: usize,
        statutes: Vec<Node>,
        cases: Vec<Node>,
        links: Vec<Vec<Link>>,
    ) -> Self {
        Self {
            dim,
            min_degree,
            statute_ids: index_ids(&statutes),
            statutes,
            cases,
            links,
        }
    }
}

fn index_ids(nodes: &[Node]) -> HashMap<String, usize> {
    nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.id.clone(), i))
        .collect()
}

/// Tree-free retrieval directly over records: top-1 statute over all
/// statutes, top `top_cases` over all cases.
pub fn flat_retrieve(
    statutes: &[Statute],
    cases: &[Case],
    question: &str,
    embedder: &dyn EmbeddingProvider,
    top_cases: usize,
) -> Result<RetrievedKnowledge, TreeError> {
    if statutes.is_empty() {
        return Err(TreeError::EmptyStatuteSet);
    }
    let q = embed_question(question, embedder)?;
    let s_nodes = to_nodes(
        statutes
            .iter()
            .map(|s| (s.id.as_str(), s.text.as_str(), s.embedding.as_ref())),
        embedder,
    )?;
    let c_nodes = to_nodes(
        cases
            .iter()
            .map(|c| (c.id.as_str(), c.text.as_str(), c.embedding.as_ref())),
        embedder,
    )?;
    let (s, statute_score) = top_k(&q, &s_nodes, 0..s_nodes.len(), 1)[0];
    let hits = top_k(&q, &c_nodes, 0..c_nodes.len(), top_cases);
    let node_statute = &s_nodes[s];
    Ok(RetrievedKnowledge {
        statute: Statute {
            id: node_statute.id.clone(),
            text: node_statute.text.clone(),
            embedding: Some(node_statute.embedding.clone()),
        },
        statute_score,
        cases: hits
            .iter()
            .map(|&(c, _)| Case {
                id: c_nodes[c].id.clone(),
                text: c_nodes[c].text.clone(),
                embedding: Some(c_nodes[c].embedding.clone()),
            })
            .collect(),
        scores: hits.iter().map(|&(_, sc)| sc).collect(),
    })
}
