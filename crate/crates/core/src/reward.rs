//! Structure-gated reward and per-token KL shaping.
//!
//! A response that does not parse as a syllogism scores exactly 0. Otherwise
//!
//! ```text
//! r = ½·sim(major, statute) + ½·mean_i sim(major, case_i) + sim(minor, question) + rouge_sum(conclusion, gold)
//! ```
//!
//! with every similarity clamped to `[0, 1]`. The task reward lands on the
//! final generated token; every token pays `β·KL(π ‖ π_ref)` at its context.

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::embed::{EmbedError, EmbeddingProvider};
use crate::knowledge_tree::RetrievedKnowledge;
use crate::metrics::{cosine, rouge_sum, TokenMode};
use crate::numeric::log_softmax;
use crate::syllogism::{parse_response, MarkerSet};

pub const DEFAULT_BETA: f64 = 0.02;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewardError {
    #[error("embedding failed: {0}")]
    EmbeddingFailure(#[from] EmbedError),
    #[error("trajectory has no steps")]
    EmptyTrajectory,
    #[error("logit dimensions differ or are below 2: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("non-finite logit")]
    NonFiniteLogit,
    #[error("question and gold answer must be non-empty")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    #[default]
    Full,
    /// Premise terms zeroed; only the conclusion is rewarded.
    ConclusionOnly,
}

impl FromStr for RewardMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Self::Full),
            "conclusion_only" => Ok(Self::ConclusionOnly),
            other => Err(format!(
                "unknown reward mode `{other}` (expected full|conclusion_only)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub beta: f64,
    pub mode: RewardMode,
    pub markers: MarkerSet,
    pub token_mode: TokenMode,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            beta: DEFAULT_BETA,
            mode: RewardMode::Full,
            markers: MarkerSet::default(),
            token_mode: TokenMode::Word,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub valid: bool,
    pub statute_sim: f64,
    pub case_sim_mean: f64,
    pub minor_sim: f64,
    pub conclusion_score: f64,
    pub total: f64,
}

impl RewardBreakdown {
    /// The three premise terms as they enter the total.
    pub fn premise_score(&self) -> f64 {
        0.5 * self.statute_sim + 0.5 * self.case_sim_mean + self.minor_sim
    }
}

fn clamped_sim(a: &[f32], b: &[f32]) -> f64 {
    cosine(a, b).map_or(0.0, |c| c.clamp(0.0, 1.0))
}

fn stored_or_embed(
    stored: Option<&Vec<f32>>,
    text: &str,
    dim: usize,
    embedder: &dyn EmbeddingProvider,
) -> Result<Vec<f32>, EmbedError> {
    match stored {
        Some(v) if v.len() == dim => Ok(v.clone()),
        _ => embedder.embed(text),
    }
}

pub fn score_path(
    response: &str,
    retrieved: &RetrievedKnowledge,
    question: &str,
    gold_answer: &str,
    embedder: &dyn EmbeddingProvider,
    config: &RewardConfig,
) -> Result<RewardBreakdown, RewardError> {
    if question.trim().is_empty() || gold_answer.trim().is_empty() {
        return Err(RewardError::EmptyInput);
    }
    let Ok(path) = parse_response(response, &config.markers) else {
        return Ok(RewardBreakdown::default());
    };
    let e = std::f64::consts::E;
    let conclusion_score =
        rouge_sum(&path.conclusion, gold_answer, config.token_mode).clamp(0.0, e - 1.0);
    if config.mode == RewardMode::ConclusionOnly {
        return Ok(RewardBreakdown {
            valid: true,
            conclusion_score,
            total: conclusion_score,
            ..Default::default()
        });
    }

    let major = embedder.embed(&path.major)?;
    let minor = embedder.embed(&path.minor)?;
    let dim = major.len();
    let statute = stored_or_embed(
        retrieved.statute.embedding.as_ref(),
        &retrieved.statute.text,
        dim,
        embedder,
    )?;
    let statute_sim = clamped_sim(&major, &statute);
    let case_sim_mean = if retrieved.cases.is_empty() {
        0.0
    } else {
        let mut sum = 0.0;
        for c in &retrieved.cases {
            let v = stored_or_embed(c.embedding.as_ref(), &c.text, dim, embedder)?;
            sum += clamped_sim(&major, &v);
        }
        sum / retrieved.cases.len() as f64
    };
    let minor_sim = clamped_sim(&minor, &embedder.embed(question)?);
    let total = 0.5 * statute_sim + 0.5 * case_sim_mean + minor_sim + conclusion_score;
    Ok(RewardBreakdown {
        valid: true,
        statute_sim,
        case_sim_mean,
        minor_sim,
        conclusion_score,
        total,
    })
}

/// Per-token rewards: `−β·kl_t` everywhere, plus the task reward on the last step.
pub fn shaped_rewards(
    step_kls: &[f64],
    terminal_reward: f64,
    beta: f64,
) -> Result<Vec<f64>, RewardError> {
    let last = step_kls
        .len()
        .checked_sub(1)
        .ok_or(RewardError::EmptyTrajectory)?;
    Ok(step_kls
        .iter()
        .enumerate()
        .map(|(t, kl)| {
            if t == last {
                terminal_reward - beta * kl
            } else {
                -beta * kl
            }
        })
        .collect())
}

/// `KL(softmax(p) ‖ softmax(q))`, with `0·ln(0/q) = 0`.
pub fn kl_divergence(p_logits: &[f64], q_logits: &[f64]) -> Result<f64, RewardError> {
    if p_logits.len() != q_logits.len() || p_logits.len() < 2 {
        return Err(RewardError::DimensionMismatch(
            p_logits.len(),
            q_logits.len(),
        ));
    }
    if p_logits.iter().chain(q_logits).any(|x| !x.is_finite()) {
        return Err(RewardError::NonFiniteLogit);
    }
    Ok(kl_from_log_probs(
        &log_softmax(p_logits),
        &log_softmax(q_logits),
    ))
}

pub(crate) fn kl_from_log_probs(log_p: &[f64], log_q: &[f64]) -> f64 {
    log_p
        .iter()
        .zip(log_q)
        .map(|(&lp, &lq)| {
            let p = lp.exp();
            if p == 0.0 {
                0.0
            } else {
                p * (lp - lq)
            }
        })
        .sum()
}
