//! One function per subcommand. Each writes machine-readable JSON lines to
//! the given sink and returns a typed summary for programmatic callers.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lexsyl_core::corpus::{read_records, write_records};
use lexsyl_core::knowledge_tree::{
    flat_retrieve, Bm25Index, Bm25Params, KnowledgeTree, RetrievedKnowledge,
};
use lexsyl_core::metrics::{bleu, cosine, rouge_l, rouge_n, TokenMode};
use lexsyl_core::policy::{
    greedy_decode, prompt_tokens, sft_train, warmup_examples, Mlp, TemplatePathGen, Vocab,
    TEMPLATE_WORDS,
};
use lexsyl_core::ppo::{self, EnvItem, Environment, EpochStats};
use lexsyl_core::reward::{score_path, RewardBreakdown};
use lexsyl_core::syllogism::parse_response;
use lexsyl_core::{Case, EmbeddingProvider, MarkerSet, QaPair, Statute};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{with_suffix, RetrievalMode, RunConfig};

fn emit(out: &mut dyn Write, value: &impl Serialize) -> Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

fn to_jsonl(values: &[Value]) -> String {
    values.iter().map(|v| format!("{v}\n")).collect()
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn load<R: lexsyl_core::corpus::Record>(cfg: &RunConfig, key: &str) -> Result<Vec<R>> {
    let path = cfg.require_files(&[key])?.remove(0);
    Ok(read_records(&path)?)
}

/// Question → knowledge under the configured retrieval mode.
pub enum Retriever {
    Tree(KnowledgeTree),
    Flat {
        statutes: Vec<Statute>,
        cases: Vec<Case>,
    },
    Bm25 {
        index: Bm25Index,
        statutes: HashMap<String, Statute>,
    },
}

impl Retriever {
    pub fn open(cfg: &RunConfig, embedder: &dyn EmbeddingProvider) -> Result<Self> {
        match cfg.retrieval {
            RetrievalMode::Tree => {
                let path = cfg.require_files(&["index"])?.remove(0);
                let tree = KnowledgeTree::load(&path)?;
                if let Some(d) = embedder.dim().filter(|&d| d != tree.dim()) {
                    bail!(
                        "index {} has dimension {}, embedder produces {d}",
                        path.display(),
                        tree.dim()
                    );
                }
                Ok(Self::Tree(tree))
            }
            RetrievalMode::Flat => {
                let mut statutes: Vec<Statute> = load(cfg, "statutes")?;
                let mut cases: Vec<Case> = load(cfg, "cases")?;
                // embed once up front; flat_retrieve reuses stored vectors
                for s in &mut statutes {
                    s.embedding = Some(embedder.embed(&s.text)?);
                }
                for c in &mut cases {
                    c.embedding = Some(embedder.embed(&c.text)?);
                }
                Ok(Self::Flat { statutes, cases })
            }
            RetrievalMode::Bm25 => {
                let statutes: Vec<Statute> = load(cfg, "statutes")?;
                let index = Bm25Index::new(
                    statutes.iter().map(|s| (s.id.as_str(), s.text.as_str())),
                    Bm25Params::default(),
                )?;
                let statutes = statutes.into_iter().map(|s| (s.id.clone(), s)).collect();
                Ok(Self::Bm25 { index, statutes })
            }
        }
    }

    pub fn retrieve(
        &self,
        question: &str,
        embedder: &dyn EmbeddingProvider,
        cfg: &RunConfig,
    ) -> Result<Vec<RetrievedKnowledge>> {
        Ok(match self {
            Self::Tree(tree) => {
                tree.retrieve(question, embedder, cfg.top_statutes, cfg.top_cases)?
            }
            Self::Flat { statutes, cases } => {
                vec![flat_retrieve(
                    statutes,
                    cases,
                    question,
                    embedder,
                    cfg.top_cases,
                )?]
            }
            // single-statute setting: no precedents
            Self::Bm25 { index, statutes } => index
                .search(question, 1)?
                .into_iter()
                .map(|(id, score)| RetrievedKnowledge {
                    statute: statutes[&id].clone(),
                    statute_score: score,
                    cases: Vec::new(),
                    scores: Vec::new(),
                })
                .collect(),
        })
    }

    /// The top result, which is what training and evaluation condition on.
    pub fn top(
        &self,
        question: &str,
        embedder: &dyn EmbeddingProvider,
        cfg: &RunConfig,
    ) -> Result<RetrievedKnowledge> {
        self.retrieve(question, embedder, cfg)?
            .into_iter()
            .next()
            .with_context(|| format!("nothing retrieved for `{question}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IndexSummary {
    pub statutes: usize,
    pub cases: usize,
    pub supplemented_links: usize,
    pub statutes_below_min_degree: usize,
}

pub fn build_index(cfg: &RunConfig, out: &mut dyn Write) -> Result<IndexSummary> {
    let statutes: Vec<Statute> = load(cfg, "statutes")?;
    let cases: Vec<Case> = load(cfg, "cases")?;
    let path = cfg.output("index")?;
    let embedder = cfg.embedding_provider()?;
    let tree = KnowledgeTree::build(&statutes, &cases, embedder.as_ref(), cfg.min_degree)?;
    write_file(&path, tree.to_bytes())?;
    let summary = IndexSummary {
        statutes: tree.statutes().len(),
        cases: tree.cases().len(),
        supplemented_links: tree.supplemented_count(),
        statutes_below_min_degree: tree.deficient_statutes(),
    };
    emit(out, &summary)?;
    Ok(summary)
}

pub fn retrieve(
    cfg: &RunConfig,
    question: &str,
    out: &mut dyn Write,
) -> Result<Vec<RetrievedKnowledge>> {
    let embedder = cfg.embedding_provider()?;
    let retriever = Retriever::open(cfg, embedder.as_ref())?;
    let hits = retriever.retrieve(question, embedder.as_ref(), cfg)?;
    for k in &hits {
        let cases: Vec<Value> = k
            .cases
            .iter()
            .zip(&k.scores)
            .map(|(c, s)| json!({"id": c.id, "text": c.text, "score": s}))
            .collect();
        emit(
            out,
            &json!({
                "mode": cfg.retrieval.to_string(),
                "statute": {"id": k.statute.id, "text": k.statute.text, "score": k.statute_score},
                "cases": cases,
            }),
        )?;
    }
    Ok(hits)
}

pub fn score(
    cfg: &RunConfig,
    response_file: &Path,
    question: &str,
    gold: &str,
    out: &mut dyn Write,
) -> Result<RewardBreakdown> {
    let response = fs::read_to_string(response_file)
        .with_context(|| format!("reading {}", response_file.display()))?;
    let embedder = cfg.embedding_provider()?;
    let retriever = Retriever::open(cfg, embedder.as_ref())?;
    let knowledge = retriever.top(question, embedder.as_ref(), cfg)?;
    let breakdown = score_path(
        &response,
        &knowledge,
        question,
        gold,
        embedder.as_ref(),
        &cfg.reward_config(),
    )?;
    emit(out, &breakdown)?;
    Ok(breakdown)
}

/// Vocabulary over every corpus text the policy may see plus template words.
pub fn build_vocab(statutes: &[Statute], cases: &[Case], qa: &[&[QaPair]]) -> Result<Vocab> {
    let mut texts: Vec<&str> = statutes.iter().map(|s| s.text.as_str()).collect();
    texts.extend(cases.iter().map(|c| c.text.as_str()));
    for set in qa {
        texts.extend(
            set.iter()
                .flat_map(|q| [q.question.as_str(), q.answer.as_str()]),
        );
    }
    texts.extend(TEMPLATE_WORDS);
    Ok(Vocab::build(&texts, &MarkerSet::default())?)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub vocab: Vocab,
    pub sft_losses: Vec<f64>,
    /// The warm-up policy, when the SFT stage ran.
    pub warmup: Option<Mlp>,
    pub policy: Mlp,
    pub ppo_history: Vec<EpochStats>,
    pub checkpoints: Vec<PathBuf>,
}

pub fn train(cfg: &RunConfig, out: &mut dyn Write) -> Result<TrainOutcome> {
    if !cfg.sft && !cfg.ppo {
        bail!("both stages are disabled; set sft or ppo to true");
    }
    let checkpoint = cfg.output("checkpoint")?;
    let history_path = cfg.output("history")?;
    let statutes: Vec<Statute> = load(cfg, "statutes")?;
    let cases: Vec<Case> = load(cfg, "cases")?;
    let qa: Vec<QaPair> = load(cfg, "qa")?;
    let ppo_qa: Vec<QaPair> = if cfg.ppo {
        load(cfg, "ppo_qa")?
    } else {
        Vec::new()
    };
    let embedder = cfg.embedding_provider()?;
    let embedder = embedder.as_ref();
    let retriever = Retriever::open(cfg, embedder)?;

    let vocab = match &cfg.init_checkpoint {
        Some(init) if !cfg.sft => {
            let path = cfg
                .vocab
                .clone()
                .unwrap_or_else(|| with_suffix(init, "vocab"));
            let text =
                fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            Vocab::from_text(&text)?
        }
        _ => build_vocab(&statutes, &cases, &[&qa, &ppo_qa])?,
    };
    write_file(&cfg.vocab_path()?, vocab.to_text())?;

    let mut history = Vec::new();
    let mut checkpoints = Vec::new();
    let mut sft_losses = Vec::new();
    let mut warmup = None;
    let mut policy = match (&cfg.init_checkpoint, cfg.sft) {
        (Some(init), false) => Mlp::load(init)?,
        _ => Mlp::init(cfg.hyper(vocab.len()), cfg.seed)?,
    };
    if policy.hyper().vocab != vocab.len() {
        bail!(
            "checkpoint vocabulary {} != vocabulary file {}",
            policy.hyper().vocab,
            vocab.len()
        );
    }

    if cfg.sft {
        let mut data = Vec::new();
        for family in 0..cfg.families as u8 {
            let gen = TemplatePathGen { family };
            for item in &qa {
                let k = retriever.top(&item.question, embedder, cfg)?;
                data.extend(warmup_examples(item, &k, &gen, cfg.n_paths, &vocab)?);
            }
        }
        let (trained, losses) = sft_train(policy, &data, &cfg.sft_config())?;
        history.extend(losses.iter().enumerate().map(
            |(i, l)| json!({"stage": "sft", "epoch": i + 1, "loss": l, "examples": data.len()}),
        ));
        let path = if cfg.ppo {
            with_suffix(&checkpoint, "sft")
        } else {
            checkpoint.clone()
        };
        write_file(&path, trained.to_bytes())?;
        checkpoints.push(path);
        sft_losses = losses;
        warmup = Some(trained.clone());
        policy = trained;
    }

    let mut ppo_history = Vec::new();
    if cfg.ppo {
        let items = ppo_qa
            .iter()
            .map(|q| {
                let k = retriever.top(&q.question, embedder, cfg)?;
                Ok(EnvItem::new(&q.id, &q.question, &q.answer, k, &vocab))
            })
            .collect::<Result<Vec<_>>>()?;
        let env = Environment {
            items: &items,
            vocab: &vocab,
            embedder,
            reward: cfg.reward_config(),
        };
        let (trained, value, stats) = ppo::train(&policy, &env, &cfg.ppo_config())?;
        for s in &stats {
            let mut v = serde_json::to_value(s)?;
            v["stage"] = json!("ppo");
            history.push(v);
        }
        write_file(&checkpoint, trained.to_bytes())?;
        let value_path = with_suffix(&checkpoint, "value");
        write_file(&value_path, value.to_bytes())?;
        checkpoints.extend([checkpoint.clone(), value_path]);
        ppo_history = stats;
        policy = trained;
    }

    let summary = json!({
        "stage": "summary",
        "sft_epochs": sft_losses.len(),
        "ppo_epochs": ppo_history.len(),
        "final_sft_loss": sft_losses.last(),
        "final_reward": ppo_history.last().map(|s| s.mean_reward),
        "reward_mode": cfg.reward_config().mode,
        "retrieval": cfg.retrieval.to_string(),
        "checkpoints": checkpoints.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    });
    history.push(summary.clone());
    write_file(&history_path, to_jsonl(&history))?;
    emit(out, &summary)?;
    Ok(TrainOutcome {
        vocab,
        sft_losses,
        warmup,
        policy,
        ppo_history,
        checkpoints,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalItem {
    pub id: String,
    pub valid: bool,
    /// Parsing failed and the whole response was scored as the conclusion.
    pub fallback: bool,
    pub rouge1: f64,
    pub rouge2: f64,
    pub rougel: f64,
    pub bleu: f64,
    pub semantic: f64,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub summary: bool,
    pub n: usize,
    pub valid_rate: f64,
    pub fallback: usize,
    pub rouge1: f64,
    pub rouge2: f64,
    pub rougel: f64,
    pub bleu: f64,
    pub semantic: f64,
}

/// Conclusion-level metrics of one response against the gold answer.
pub fn eval_response(
    id: &str,
    response: &str,
    gold: &str,
    markers: &MarkerSet,
    embedder: &dyn EmbeddingProvider,
) -> Result<EvalItem> {
    let (valid, conclusion) = match parse_response(response, markers) {
        Ok(path) => (true, path.conclusion),
        Err(_) => (false, response.trim().to_string()),
    };
    let mode = TokenMode::Word;
    let semantic = if conclusion.is_empty() {
        0.0
    } else {
        cosine(&embedder.embed(&conclusion)?, &embedder.embed(gold)?).unwrap_or(0.0)
    };
    Ok(EvalItem {
        id: id.to_string(),
        valid,
        fallback: !valid,
        rouge1: rouge_n(&conclusion, gold, 1, mode).f1,
        rouge2: rouge_n(&conclusion, gold, 2, mode).f1,
        rougel: rouge_l(&conclusion, gold, mode).f1,
        bleu: bleu(&conclusion, gold, 4, mode),
        semantic,
        response: response.to_string(),
    })
}

pub fn summarize(items: &[EvalItem]) -> EvalSummary {
    let n = items.len();
    let mean = |f: fn(&EvalItem) -> f64| {
        if n == 0 {
            0.0
        } else {
            items.iter().map(f).sum::<f64>() / n as f64
        }
    };
    EvalSummary {
        summary: true,
        n,
        valid_rate: mean(|i| if i.valid { 1.0 } else { 0.0 }),
        fallback: items.iter().filter(|i| i.fallback).count(),
        rouge1: mean(|i| i.rouge1),
        rouge2: mean(|i| i.rouge2),
        rougel: mean(|i| i.rougel),
        bleu: mean(|i| i.bleu),
        semantic: mean(|i| i.semantic),
    }
}

pub fn eval(cfg: &RunConfig, out: &mut dyn Write) -> Result<(Vec<EvalItem>, EvalSummary)> {
    let checkpoint = cfg.require_files(&["checkpoint"])?.remove(0);
    let policy = Mlp::load(&checkpoint)?;
    let vocab_path = cfg.vocab_path()?;
    let vocab = Vocab::from_text(
        &fs::read_to_string(&vocab_path)
            .with_context(|| format!("reading {}", vocab_path.display()))?,
    )?;
    if policy.hyper().vocab != vocab.len() {
        bail!(
            "checkpoint vocabulary {} != vocabulary file {}",
            policy.hyper().vocab,
            vocab.len()
        );
    }
    let test: Vec<QaPair> = load(cfg, "test_qa")?;
    let embedder = cfg.embedding_provider()?;
    let embedder = embedder.as_ref();
    let retriever = Retriever::open(cfg, embedder)?;
    let mut items = Vec::with_capacity(test.len());
    for q in &test {
        let k = retriever.top(&q.question, embedder, cfg)?;
        let tokens = greedy_decode(
            &policy,
            &prompt_tokens(&vocab, &k, &q.question),
            cfg.max_len,
        )?;
        let response = vocab.decode(&tokens);
        items.push(eval_response(
            &q.id,
            &response,
            &q.answer,
            vocab.markers(),
            embedder,
        )?);
    }
    let summary = summarize(&items);
    let mut lines: Vec<Value> = items
        .iter()
        .map(serde_json::to_value)
        .collect::<Result<_, _>>()?;
    lines.push(serde_json::to_value(&summary)?);
    match &cfg.report {
        Some(path) => {
            write_file(path, to_jsonl(&lines))?;
            emit(out, &summary)?;
        }
        None => out.write_all(to_jsonl(&lines).as_bytes())?,
    }
    Ok((items, summary))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticShape {
    pub seed: u64,
    pub n_statutes: usize,
    pub cases_per_statute: usize,
    pub n_qa: usize,
}

/// Write `statutes.jsonl`, `cases.jsonl` and `qa.jsonl` under `dir`.
pub fn gen_synthetic(shape: SyntheticShape, dir: &Path, out: &mut dyn Write) -> Result<[PathBuf; 3]> {
    let world = lexsyl_core::corpus::gen_synthetic(
        shape.seed,
        shape.n_statutes,
        shape.cases_per_statute,
        shape.n_qa,
    )?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let paths = ["statutes", "cases", "qa"].map(|n| dir.join(format!("{n}.jsonl")));
    write_records(&paths[0], &world.statutes)?;
    write_records(&paths[1], &world.cases)?;
    write_records(&paths[2], &world.qa)?;
    emit(
        out,
        &json!({
            "statutes": world.statutes.len(),
            "cases": world.cases.len(),
            "qa": world.qa.len(),
            "files": paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        }),
    )?;
    Ok(paths)
}
