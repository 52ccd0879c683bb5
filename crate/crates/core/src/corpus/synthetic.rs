//! A seeded toy legal world.
//!
//! Statute `i` owns the tokens `s{i}`, `a{i}` (its action) and `p{i}` (its
//! consequence). Each case instantiates the action with an actor `r{k}`, and
//! each question asks what an actor faces for an action. Questions stay
//! under eight word tokens so a short context window still sees what
//! precedes them.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Case, CorpusError, QaPair, Statute};
use crate::rng::seeded;

pub const ACTOR_POOL: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCorpus {
    pub statutes: Vec<Statute>,
    pub cases: Vec<Case>,
    pub qa: Vec<QaPair>,
    /// Ground truth `(case id, generating statute id)`.
    pub case_links: Vec<(String, String)>,
    /// Ground truth `(qa id, statute id)`.
    pub qa_links: Vec<(String, String)>,
}

pub fn statute_text(i: usize) -> String {
    format!("statute s{i}: action a{i} incurs consequence p{i}")
}

pub fn case_text(i: usize, j: usize, actor: usize) -> String {
    format!("case c{i}x{j}: under s{i} action a{i} incurs p{i} for actor r{actor}")
}

pub fn question_text(i: usize, actor: usize) -> String {
    format!("what does actor r{actor} face for a{i}?")
}

pub fn answer_text(i: usize, actor: usize) -> String {
    format!("actor r{actor} faces p{i}")
}

pub fn gen_synthetic(
    seed: u64,
    n_statutes: usize,
    cases_per_statute: usize,
    n_qa: usize,
) -> Result<SyntheticCorpus, CorpusError> {
    if n_statutes == 0 || cases_per_statute == 0 || n_qa == 0 {
        return Err(CorpusError::InvalidCounts(
            "all counts must be positive".into(),
        ));
    }
    let n_cases = n_statutes * cases_per_statute;
    if n_qa > n_cases {
        return Err(CorpusError::InvalidCounts(format!(
            "n_qa {n_qa} exceeds {n_statutes} x {cases_per_statute} cases"
        )));
    }
    let mut rng = seeded(seed, &[0x5e17]);

    let statutes: Vec<Statute> = (1..=n_statutes)
        .map(|i| Statute::new(format!("s{i}"), statute_text(i)))
        .collect();

    let mut cases = Vec::with_capacity(n_cases);
    let mut case_links = Vec::with_capacity(n_cases);
    let mut facts = Vec::with_capacity(n_cases);
    for i in 1..=n_statutes {
        for j in 1..=cases_per_statute {
            let actor = rng.random_range(1..=ACTOR_POOL);
            let id = format!("c{i}x{j}");
            cases.push(Case::new(id.clone(), case_text(i, j, actor)));
            case_links.push((id, format!("s{i}")));
            facts.push((i, actor));
        }
    }

    let mut order: Vec<usize> = (0..n_cases).collect();
    order.shuffle(&mut rng);
    let (qa, qa_links) = order[..n_qa]
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let (i, actor) = facts[c];
            let id = format!("q{}", k + 1);
            (
                QaPair {
                    id: id.clone(),
                    question: question_text(i, actor),
                    answer: answer_text(i, actor),
                },
                (id, format!("s{i}")),
            )
        })
        .unzip();

    Ok(SyntheticCorpus {
        statutes,
        cases,
        qa,
        case_links,
        qa_links,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::embed::hash_embed;
    use crate::metrics::cosine;

    #[test]
    fn deterministic_under_seed() {
        let a = gen_synthetic(7, 5, 4, 10).unwrap();
        let b = gen_synthetic(7, 5, 4, 10).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert_eq!(a.cases.len(), 20);
        assert_eq!(a.qa.len(), 10);
        let c = gen_synthetic(8, 5, 4, 10).unwrap();
        assert_ne!(a.qa, c.qa);
    }

    #[test]
    fn invalid_counts() {
        assert!(matches!(
            gen_synthetic(7, 2, 2, 5),
            Err(CorpusError::InvalidCounts(_))
        ));
        assert!(gen_synthetic(7, 0, 2, 1).is_err());
    }

    #[test]
    fn namespaces_are_disjoint() {
        let world = gen_synthetic(3, 12, 2, 4).unwrap();
        let toks: Vec<Vec<String>> = world
            .statutes
            .iter()
            .map(|s| crate::metrics::tokenize(&s.text, crate::TokenMode::Word))
            .collect();
        for (i, a) in toks.iter().enumerate() {
            for b in &toks[i + 1..] {
                let own: Vec<_> = a
                    .iter()
                    .filter(|t| t.chars().any(|c| c.is_ascii_digit()))
                    .collect();
                assert!(own.iter().all(|t| !b.contains(t)), "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn nearest_statute_is_generator_brute_force() {
        let world = gen_synthetic(7, 5, 4, 10).unwrap();
        let s_emb: Vec<_> = world
            .statutes
            .iter()
            .map(|s| hash_embed(&s.text, 512).unwrap())
            .collect();
        for (case, (_, gold)) in world.cases.iter().zip(&world.case_links) {
            let e = hash_embed(&case.text, 512).unwrap();
            let best = (0..s_emb.len())
                .max_by(|&x, &y| {
                    cosine(&e, &s_emb[x])
                        .unwrap()
                        .total_cmp(&cosine(&e, &s_emb[y]).unwrap())
                        .then(y.cmp(&x))
                })
                .unwrap();
            assert_eq!(&world.statutes[best].id, gold, "case {}", case.id);
        }
    }
}
