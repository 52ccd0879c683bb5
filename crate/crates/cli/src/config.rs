//! Run configuration: a flat `key = value` file whose keys double as CLI
//! flags (`--ppo-lr 0.002` sets `ppo_lr`).

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use lexsyl_core::knowledge_tree::{DEFAULT_MIN_DEGREE, DEFAULT_TOP_CASES, DEFAULT_TOP_STATUTES};
use lexsyl_core::policy::{Hyper, SftConfig};
use lexsyl_core::ppo::PpoConfig;
use lexsyl_core::reward::{RewardConfig, RewardMode, DEFAULT_BETA};
use lexsyl_core::{EmbeddingProvider, HashEmbedder, RemoteEmbedder};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: {reason}")]
    BadValue { key: String, reason: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RetrievalMode {
    #[default]
    Tree,
    Flat,
    Bm25,
}

impl FromStr for RetrievalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tree" => Ok(Self::Tree),
            "flat" => Ok(Self::Flat),
            "bm25" => Ok(Self::Bm25),
            other => Err(format!(
                "unknown retrieval mode `{other}` (expected tree|flat|bm25)"
            )),
        }
    }
}

impl fmt::Display for RetrievalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Tree => "tree",
            Self::Flat => "flat",
            Self::Bm25 => "bm25",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmbedderChoice {
    Hash { dim: usize },
    Remote { endpoint: String },
}

/// Every key accepted in a config file or as a `--flag`, with its help text.
pub const KEYS: &[(&str, &str)] = &[
    ("statutes", "statute records (JSONL)"),
    ("cases", "case records (JSONL)"),
    ("qa", "training QA records (JSONL)"),
    (
        "ppo_qa",
        "QA records for the RL environment (defaults to qa)",
    ),
    ("test_qa", "evaluation QA records (JSONL)"),
    ("index", "knowledge-tree index file"),
    (
        "checkpoint",
        "policy checkpoint written by train, read by eval",
    ),
    (
        "init_checkpoint",
        "start PPO from this checkpoint instead of warm-up",
    ),
    ("vocab", "vocabulary file (defaults to <checkpoint>.vocab)"),
    ("history", "training history output (JSONL)"),
    (
        "report",
        "evaluation report output (JSONL, stdout if unset)",
    ),
    ("embedder", "hash|remote"),
    ("hash_dim", "hash embedder dimension"),
    ("endpoint", "remote embedding service base URL"),
    ("max_in_flight", "remote embedder concurrent request cap"),
    ("timeout_ms", "remote embedder request timeout"),
    ("retrieval", "tree|flat|bm25"),
    ("reward_mode", "full|conclusion_only"),
    ("sft", "run the warm-up stage (true|false)"),
    ("ppo", "run the RL stage (true|false)"),
    (
        "min_degree",
        "minimum links per statute after supplementation",
    ),
    ("top_statutes", "statutes retrieved per question"),
    ("top_cases", "cases retrieved per statute"),
    ("window", "policy context window"),
    ("embed", "policy token embedding width"),
    ("hidden", "policy hidden width"),
    ("n_paths", "warm-up reasoning paths per question and family"),
    ("families", "number of template path families"),
    ("sft_epochs", "warm-up epochs"),
    ("sft_lr", "warm-up learning rate"),
    ("sft_batch", "warm-up minibatch size"),
    ("ppo_epochs", "PPO epochs"),
    ("ppo_lr", "policy learning rate"),
    ("value_lr", "value learning rate"),
    ("beta", "KL penalty weight"),
    ("clip", "PPO clip range"),
    ("ppo_batch", "trajectories per PPO minibatch"),
    ("gamma", "discount"),
    ("gae_lambda", "GAE lambda"),
    (
        "rollouts_per_question",
        "sampled responses per question per epoch",
    ),
    ("update_passes", "minibatch passes per PPO epoch"),
    ("max_len", "maximum generated tokens"),
    ("seed", "master seed"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub statutes: Option<PathBuf>,
    pub cases: Option<PathBuf>,
    pub qa: Option<PathBuf>,
    pub ppo_qa: Option<PathBuf>,
    pub test_qa: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub init_checkpoint: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub history: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub embedder: EmbedderChoice,
    pub max_in_flight: usize,
    pub timeout_ms: u64,
    pub retrieval: RetrievalMode,
    pub reward_mode: RewardMode,
    pub sft: bool,
    pub ppo: bool,
    pub min_degree: usize,
    pub top_statutes: usize,
    pub top_cases: usize,
    pub window: usize,
    pub embed: usize,
    pub hidden: usize,
    pub n_paths: usize,
    pub families: usize,
    pub sft_epochs: usize,
    pub sft_lr: f64,
    pub sft_batch: usize,
    pub ppo_epochs: usize,
    pub ppo_lr: f64,
    pub value_lr: f64,
    pub beta: f64,
    pub clip: f64,
    pub ppo_batch: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub rollouts_per_question: usize,
    pub update_passes: usize,
    pub max_len: usize,
    pub seed: u64,
    /// Set while parsing so `hash_dim` and `endpoint` can arrive in any order.
    hash_dim: usize,
    endpoint: Option<String>,
}

pub const DEFAULT_HASH_DIM: usize = 1024;

impl Default for RunConfig {
    fn default() -> Self {
        let sft = SftConfig::default();
        let ppo = PpoConfig::default();
        let hyper = Hyper::policy(1);
        Self {
            statutes: None,
            cases: None,
            qa: None,
            ppo_qa: None,
            test_qa: None,
            index: None,
            checkpoint: None,
            init_checkpoint: None,
            vocab: None,
            history: None,
            report: None,
            embedder: EmbedderChoice::Hash {
                dim: DEFAULT_HASH_DIM,
            },
            max_in_flight: 4,
            timeout_ms: 30_000,
            retrieval: RetrievalMode::Tree,
            reward_mode: RewardMode::Full,
            sft: true,
            ppo: true,
            min_degree: DEFAULT_MIN_DEGREE,
            top_statutes: DEFAULT_TOP_STATUTES,
            top_cases: DEFAULT_TOP_CASES,
            window: hyper.window,
            embed: hyper.embed,
            hidden: hyper.hidden,
            n_paths: 10,
            families: 2,
            sft_epochs: sft.epochs,
            sft_lr: sft.lr,
            sft_batch: sft.batch,
            ppo_epochs: ppo.epochs,
            ppo_lr: ppo.lr,
            value_lr: ppo.value_lr,
            beta: DEFAULT_BETA,
            clip: ppo.clip,
            ppo_batch: ppo.batch,
            gamma: ppo.gamma,
            gae_lambda: ppo.gae_lambda,
            rollouts_per_question: ppo.rollouts_per_question,
            update_passes: ppo.update_passes,
            max_len: ppo.max_len,
            seed: 0,
            hash_dim: DEFAULT_HASH_DIM,
            endpoint: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.into(),
        reason: e.to_string(),
    })
}

impl RunConfig {
    /// Parse a config file body. Blank lines and `#` comments are ignored;
    /// later keys override earlier ones.
    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: i + 1 })?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.finish()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
        Self::parse_str(&text)
    }

    /// Apply `key = value` overrides, then re-check invariants.
    pub fn with_overrides<'a>(
        mut self,
        pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Self, ConfigError> {
        for (k, v) in pairs {
            self.set(k, v)?;
        }
        self.finish()?;
        Ok(self)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let path = || Some(PathBuf::from(value));
        match key {
            "statutes" => self.statutes = path(),
            "cases" => self.cases = path(),
            "qa" => self.qa = path(),
            "ppo_qa" => self.ppo_qa = path(),
            "test_qa" => self.test_qa = path(),
            "index" => self.index = path(),
            "checkpoint" => self.checkpoint = path(),
            "init_checkpoint" => self.init_checkpoint = path(),
            "vocab" => self.vocab = path(),
            "history" => self.history = path(),
            "report" => self.report = path(),
            "embedder" => {
                self.embedder = match value {
                    "hash" => EmbedderChoice::Hash { dim: self.hash_dim },
                    "remote" => EmbedderChoice::Remote {
                        endpoint: self.endpoint.clone().unwrap_or_default(),
                    },
                    other => {
                        return Err(ConfigError::BadValue {
                            key: key.into(),
                            reason: format!("unknown embedder `{other}` (expected hash|remote)"),
                        })
                    }
                }
            }
            "hash_dim" => self.hash_dim = parse(key, value)?,
            "endpoint" => self.endpoint = Some(value.to_string()),
            "max_in_flight" => self.max_in_flight = parse(key, value)?,
            "timeout_ms" => self.timeout_ms = parse(key, value)?,
            "retrieval" => self.retrieval = parse(key, value)?,
            "reward_mode" => self.reward_mode = parse(key, value)?,
            "sft" => self.sft = parse(key, value)?,
            "ppo" => self.ppo = parse(key, value)?,
            "min_degree" => self.min_degree = parse(key, value)?,
            "top_statutes" => self.top_statutes = parse(key, value)?,
            "top_cases" => self.top_cases = parse(key, value)?,
            "window" => self.window = parse(key, value)?,
            "embed" => self.embed = parse(key, value)?,
            "hidden" => self.hidden = parse(key, value)?,
            "n_paths" => self.n_paths = parse(key, value)?,
            "families" => self.families = parse(key, value)?,
            "sft_epochs" => self.sft_epochs = parse(key, value)?,
            "sft_lr" => self.sft_lr = parse(key, value)?,
            "sft_batch" => self.sft_batch = parse(key, value)?,
            "ppo_epochs" => self.ppo_epochs = parse(key, value)?,
            "ppo_lr" => self.ppo_lr = parse(key, value)?,
            "value_lr" => self.value_lr = parse(key, value)?,
            "beta" => self.beta = parse(key, value)?,
            "clip" => self.clip = parse(key, value)?,
            "ppo_batch" => self.ppo_batch = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "gae_lambda" => self.gae_lambda = parse(key, value)?,
            "rollouts_per_question" => self.rollouts_per_question = parse(key, value)?,
            "update_passes" => self.update_passes = parse(key, value)?,
            "max_len" => self.max_len = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Resolve the embedder from the collected keys and check invariants.
    fn finish(&mut self) -> Result<(), ConfigError> {
        self.embedder = match &self.embedder {
            EmbedderChoice::Hash { .. } => EmbedderChoice::Hash { dim: self.hash_dim },
            EmbedderChoice::Remote { .. } => match &self.endpoint {
                Some(e) if !e.is_empty() => EmbedderChoice::Remote {
                    endpoint: e.clone(),
                },
                _ => {
                    return Err(ConfigError::Invalid(
                        "embedder = remote needs an endpoint".into(),
                    ))
                }
            },
        };
        if self.hash_dim < lexsyl_core::corpus::embed::MIN_HASH_DIM {
            return Err(ConfigError::Invalid(format!(
                "hash_dim {} is too small",
                self.hash_dim
            )));
        }
        if self.top_statutes == 0 || self.min_degree == 0 {
            return Err(ConfigError::Invalid(
                "top_statutes and min_degree must be positive".into(),
            ));
        }
        if self.n_paths == 0 || self.families == 0 || self.families > 2 {
            return Err(ConfigError::Invalid(
                "n_paths must be positive and families in 1..=2".into(),
            ));
        }
        if self.sft_batch == 0 || self.sft_lr.is_nan() || self.sft_lr <= 0.0 {
            return Err(ConfigError::Invalid(
                "sft_batch and sft_lr must be positive".into(),
            ));
        }
        self.ppo_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Check that each listed input path was configured and exists.
    pub fn require_files(&self, keys: &[&str]) -> Result<Vec<PathBuf>, ConfigError> {
        keys.iter()
            .map(|&k| {
                let p = self
                    .path(k)
                    .ok_or_else(|| ConfigError::Invalid(format!("`{k}` is not set")))?;
                if !p.is_file() {
                    return Err(ConfigError::Invalid(format!(
                        "{k}: {} does not exist",
                        p.display()
                    )));
                }
                Ok(p.to_path_buf())
            })
            .collect()
    }

    pub fn path(&self, key: &str) -> Option<&Path> {
        match key {
            "statutes" => self.statutes.as_deref(),
            "cases" => self.cases.as_deref(),
            "qa" => self.qa.as_deref(),
            "ppo_qa" => self.ppo_qa.as_deref().or(self.qa.as_deref()),
            "test_qa" => self.test_qa.as_deref(),
            "index" => self.index.as_deref(),
            "checkpoint" => self.checkpoint.as_deref(),
            "init_checkpoint" => self.init_checkpoint.as_deref(),
            "history" => self.history.as_deref(),
            "report" => self.report.as_deref(),
            _ => None,
        }
    }

    /// Output path for a required artifact, failing when unset.
    pub fn output(&self, key: &str) -> Result<PathBuf, ConfigError> {
        self.path(key)
            .map(Path::to_path_buf)
            .ok_or_else(|| ConfigError::Invalid(format!("`{key}` is not set")))
    }

    pub fn vocab_path(&self) -> Result<PathBuf, ConfigError> {
        match (&self.vocab, &self.checkpoint) {
            (Some(v), _) => Ok(v.clone()),
            (None, Some(c)) => Ok(with_suffix(c, "vocab")),
            (None, None) => Err(ConfigError::Invalid(
                "neither `vocab` nor `checkpoint` is set".into(),
            )),
        }
    }

    pub fn embedding_provider(&self) -> Result<Box<dyn EmbeddingProvider>, ConfigError> {
        Ok(match &self.embedder {
            EmbedderChoice::Hash { dim } => {
                Box::new(HashEmbedder::new(*dim).map_err(|e| ConfigError::Invalid(e.to_string()))?)
            }
            EmbedderChoice::Remote { endpoint } => Box::new(RemoteEmbedder::new(
                endpoint,
                self.max_in_flight,
                Duration::from_millis(self.timeout_ms),
            )),
        })
    }

    pub fn hyper(&self, vocab: usize) -> Hyper {
        Hyper {
            window: self.window,
            embed: self.embed,
            hidden: self.hidden,
            vocab,
            out: vocab,
        }
    }

    pub fn sft_config(&self) -> SftConfig {
        SftConfig {
            epochs: self.sft_epochs,
            lr: self.sft_lr,
            batch: self.sft_batch,
            seed: self.seed,
        }
    }

    pub fn ppo_config(&self) -> PpoConfig {
        PpoConfig {
            clip: self.clip,
            lr: self.ppo_lr,
            value_lr: self.value_lr,
            beta: self.beta,
            epochs: self.ppo_epochs,
            batch: self.ppo_batch,
            gamma: self.gamma,
            gae_lambda: self.gae_lambda,
            rollouts_per_question: self.rollouts_per_question,
            update_passes: self.update_passes,
            max_len: self.max_len,
            seed: self.seed,
        }
    }

    pub fn reward_config(&self) -> RewardConfig {
        RewardConfig {
            beta: self.beta,
            mode: self.reward_mode,
            ..Default::default()
        }
    }
}

/// `run/policy.ckpt` + `vocab` → `run/policy.ckpt.vocab`.
pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}
