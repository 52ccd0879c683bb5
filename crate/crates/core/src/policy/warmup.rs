use super::sft::SftExample;
use super::vocab::{Vocab, EOS, SEP};
use super::PolicyError;
use crate::corpus::embed::EmbeddingProvider;
use crate::corpus::QaPair;
use crate::knowledge_tree::{
    KnowledgeTree, RetrievedKnowledge, DEFAULT_TOP_CASES, DEFAULT_TOP_STATUTES,
};
use crate::syllogism::{parse_response, render_path, ReasoningPath};

/// Produces reasoning paths for warm-up. Must be deterministic in
/// `(question, knowledge, gold, path_index)`.
pub trait PathGenerator: Sync {
    fn generate(
        &self,
        question: &str,
        knowledge: &RetrievedKnowledge,
        gold: &str,
        path_index: usize,
    ) -> Option<ReasoningPath>;
}

/// Words the template generator adds on top of the corpus vocabulary.
pub const TEMPLATE_WORDS: &[&str] = &["applied", "as", "in", "therefore"];

/// Offline stand-in for an LLM path generator.
///
/// Family 0 states the statute and then a precedent; family 1 links them with
/// "as applied in" and prefixes the conclusion with "therefore". Both keep
/// the statute first, so the end of a case is always followed by the minor
/// premise. Path `k` cites the `k mod m`-th retrieved case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TemplatePathGen {
    pub family: u8,
}

impl PathGenerator for TemplatePathGen {
    fn generate(
        &self,
        question: &str,
        knowledge: &RetrievedKnowledge,
        gold: &str,
        path_index: usize,
    ) -> Option<ReasoningPath> {
        let statute = knowledge.statute.text.trim();
        let case = match knowledge.cases.len() {
            0 => "",
            m => knowledge.cases[path_index % m].text.trim(),
        };
        let (major, conclusion) = match self.family {
            0 => (format!("{statute} {case}"), gold.trim().to_string()),
            1 if case.is_empty() => (statute.to_string(), format!("therefore {}", gold.trim())),
            1 => (
                format!("{statute} as applied in {case}"),
                format!("therefore {}", gold.trim()),
            ),
            _ => return None,
        };
        Some(ReasoningPath {
            major: major.trim().to_string(),
            minor: question.trim().to_string(),
            conclusion,
        })
    }
}

/// Statute text, case texts, SEP, question.
pub fn prompt_tokens(vocab: &Vocab, knowledge: &RetrievedKnowledge, question: &str) -> Vec<u32> {
    let mut out = vocab.encode(&knowledge.statute.text);
    for c in &knowledge.cases {
        out.extend(vocab.encode(&c.text));
    }
    out.push(SEP);
    out.extend(vocab.encode(question));
    out
}

/// `n_paths` examples for one item whose knowledge is already retrieved.
pub fn warmup_examples(
    item: &QaPair,
    knowledge: &RetrievedKnowledge,
    pathgen: &dyn PathGenerator,
    n_paths: usize,
    vocab: &Vocab,
) -> Result<Vec<SftExample>, PolicyError> {
    let fail = || PolicyError::PathGenFailure(item.id.clone());
    let prompt = prompt_tokens(vocab, knowledge, &item.question);
    (0..n_paths)
        .map(|k| {
            let path = pathgen
                .generate(&item.question, knowledge, &item.answer, k)
                .ok_or_else(fail)?;
            let text = render_path(&path, vocab.markers()).map_err(|_| fail())?;
            let mut target = vocab.encode(&text);
            // what the policy would have to emit must itself be a valid path
            parse_response(&vocab.decode(&target), vocab.markers()).map_err(|_| fail())?;
            target.push(EOS);
            Ok(SftExample {
                prompt: prompt.clone(),
                target,
            })
        })
        .collect()
}

/// `n_paths` examples per QA item, in item order then path order, using
/// default two-step tree retrieval.
pub fn build_warmup_dataset(
    qa: &[QaPair],
    tree: &KnowledgeTree,
    embedder: &dyn EmbeddingProvider,
    pathgen: &dyn PathGenerator,
    n_paths: usize,
    vocab: &Vocab,
) -> Result<Vec<SftExample>, PolicyError> {
    let mut out = Vec::with_capacity(qa.len() * n_paths);
    for item in qa {
        let knowledge = tree
            .retrieve(
                &item.question,
                embedder,
                DEFAULT_TOP_STATUTES,
                DEFAULT_TOP_CASES,
            )?
            .into_iter()
            .next()
            .ok_or_else(|| PolicyError::PathGenFailure(item.id.clone()))?;
        out.extend(warmup_examples(item, &knowledge, pathgen, n_paths, vocab)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::gen_synthetic;
    use crate::syllogism::MarkerSet;
    use crate::HashEmbedder;

    fn setup() -> (Vec<QaPair>, KnowledgeTree, HashEmbedder, Vocab) {
        let w = gen_synthetic(11, 5, 6, 10).unwrap();
        let emb = HashEmbedder::new(256).unwrap();
        let tree = KnowledgeTree::build(&w.statutes, &w.cases, &emb, 5).unwrap();
        let mut texts: Vec<String> = w.statutes.iter().map(|s| s.text.clone()).collect();
        texts.extend(w.cases.iter().map(|c| c.text.clone()));
        texts.extend(
            w.qa.iter()
                .flat_map(|q| [q.question.clone(), q.answer.clone()]),
        );
        texts.extend(TEMPLATE_WORDS.iter().map(|s| s.to_string()));
        let vocab = Vocab::build(&texts, &MarkerSet::default()).unwrap();
        (w.qa, tree, emb, vocab)
    }

    #[test]
    fn ten_items_ten_paths_make_a_hundred_valid_examples() {
        let (qa, tree, emb, vocab) = setup();
        for family in [0, 1] {
            let gen = TemplatePathGen { family };
            let data = build_warmup_dataset(&qa, &tree, &emb, &gen, 10, &vocab).unwrap();
            assert_eq!(data.len(), 100);
            for ex in &data {
                ex.validate().unwrap();
                assert!(!ex.target.contains(&crate::policy::vocab::UNK));
                let text = vocab.decode(&ex.target);
                parse_response(&text, vocab.markers()).unwrap();
                assert_eq!(ex.prompt.iter().filter(|&&t| t == SEP).count(), 1);
            }
            let again = build_warmup_dataset(&qa, &tree, &emb, &gen, 10, &vocab).unwrap();
            assert_eq!(data, again);
        }
    }

    #[test]
    fn paths_vary_with_index() {
        let (qa, tree, emb, vocab) = setup();
        let data = build_warmup_dataset(
            &qa[..1],
            &tree,
            &emb,
            &TemplatePathGen::default(),
            3,
            &vocab,
        )
        .unwrap();
        assert_ne!(data[0].target, data[1].target);
    }

    #[test]
    fn failing_generator_names_the_item() {
        let (qa, tree, emb, vocab) = setup();
        let bad = TemplatePathGen { family: 7 };
        match build_warmup_dataset(&qa, &tree, &emb, &bad, 1, &vocab) {
            Err(PolicyError::PathGenFailure(id)) => assert_eq!(id, qa[0].id),
            other => panic!("{other:?}"),
        }
    }
}
