//! Clipped-surrogate PPO on the toy policy.
//!
//! An episode is one generated response. The terminal reward is the
//! structure-gated score of the decoded text, and every step also pays
//! `-β·KL(π‖π_ref)` against the frozen warm-up policy. Advantages come from
//! GAE over a separate value network.

mod rollout;
mod update;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::embed::EmbeddingProvider;
use crate::knowledge_tree::RetrievedKnowledge;
use crate::policy::{
    prompt_tokens, Adam, Hyper, Mlp, PolicyError, PolicyParams, Vocab, MAX_RESPONSE_LEN,
};
use crate::reward::{RewardBreakdown, RewardConfig, RewardError, DEFAULT_BETA};

pub use rollout::collect_rollouts;
pub use update::{gae, normalize_advantages, ppo_update, surrogate_loss, value_loss, UpdateStats};

pub type ValueParams = Mlp;

/// Toy-scale PPO learning rate. A 7B model would use 1e-5.
pub const DEFAULT_PPO_LR: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum PpoError {
    #[error("no environment items")]
    EmptyEnvironment,
    #[error("empty batch")]
    EmptyBatch,
    #[error("length mismatch: {0} rewards vs {1} values")]
    LengthMismatch(usize, usize),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpoConfig {
    pub clip: f64,
    pub lr: f64,
    pub value_lr: f64,
    pub beta: f64,
    pub epochs: usize,
    /// Trajectories per minibatch.
    pub batch: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub rollouts_per_question: usize,
    /// Minibatch passes over each epoch's rollouts.
    pub update_passes: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            lr: DEFAULT_PPO_LR,
            value_lr: DEFAULT_PPO_LR,
            beta: DEFAULT_BETA,
            epochs: 10,
            batch: 16,
            gamma: 1.0,
            gae_lambda: 0.95,
            rollouts_per_question: 4,
            update_passes: 4,
            max_len: MAX_RESPONSE_LEN,
            seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), PpoError> {
        let bad = |m: &str| Err(PpoError::InvalidConfig(m.into()));
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad("clip must lie in (0, 1)");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0)
            || !(self.gae_lambda > 0.0 && self.gae_lambda <= 1.0)
        {
            return bad("gamma and lambda must lie in (0, 1]");
        }
        if !(self.lr > 0.0 && self.value_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta must be finite and non-negative");
        }
        if self.batch == 0 || self.rollouts_per_question == 0 || self.max_len == 0 {
            return bad("batch, rollouts_per_question and max_len must be positive");
        }
        Ok(())
    }
}

/// One question the policy is asked, with its retrieved knowledge.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvItem {
    pub id: String,
    pub question: String,
    pub gold: String,
    pub knowledge: RetrievedKnowledge,
    pub prompt: Vec<u32>,
}

impl EnvItem {
    pub fn new(
        id: &str,
        question: &str,
        gold: &str,
        knowledge: RetrievedKnowledge,
        vocab: &Vocab,
    ) -> Self {
        Self {
            id: id.to_string(),
            question: question.to_string(),
            gold: gold.to_string(),
            prompt: prompt_tokens(vocab, &knowledge, question),
            knowledge,
        }
    }
}

/// Everything rollouts need besides parameters.
pub struct Environment<'a> {
    pub items: &'a [EnvItem],
    pub vocab: &'a Vocab,
    pub embedder: &'a dyn EmbeddingProvider,
    pub reward: RewardConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub item: usize,
    pub prompt: Vec<u32>,
    pub tokens: Vec<u32>,
    /// Chosen-token log-probabilities under the behavior policy.
    pub logprobs: Vec<f64>,
    pub kls: Vec<f64>,
    pub values: Vec<f64>,
    pub breakdown: RewardBreakdown,
    /// Premise component under full-mode scoring, whatever the reward mode.
    pub premise_full: f64,
    pub shaped: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Context the policy saw before emitting step `t`.
    pub(crate) fn context(&self, policy: &Mlp, t: usize) -> Vec<u32> {
        let mut seq = self.prompt.clone();
        seq.extend_from_slice(&self.tokens[..t]);
        policy.window_of(&seq)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_reward: f64,
    pub valid_rate: f64,
    pub mean_kl: f64,
    pub premise_sim: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub value_loss: f64,
}

pub struct PpoOptimizers {
    pub policy: Adam,
    pub value: Adam,
}

impl PpoOptimizers {
    pub fn new(policy: &Mlp, value: &Mlp, config: &PpoConfig) -> Self {
        Self {
            policy: Adam::new(config.lr, policy.params().len()),
            value: Adam::new(config.value_lr, value.params().len()),
        }
    }
}

pub fn init_value(policy: &PolicyParams, seed: u64) -> Result<ValueParams, PpoError> {
    Ok(Mlp::init(Hyper::value(policy.hyper().vocab), seed)?)
}

/// Shift the critic's output bias so it predicts the first batch's mean
/// return everywhere. Without this a freshly initialized critic reads ~0
/// while returns sit near the terminal reward, and the resulting advantages
/// mostly encode distance to the end of the episode.
fn calibrate_value_bias(value: &mut ValueParams, trajs: &mut [Trajectory]) {
    let n = trajs.len() as f64;
    let target = trajs
        .iter()
        .map(|t| t.shaped.iter().sum::<f64>())
        .sum::<f64>()
        / n;
    let mean_v = trajs.iter().flat_map(|t| &t.values).sum::<f64>()
        / trajs.iter().map(Trajectory::len).sum::<usize>().max(1) as f64;
    let shift = target - mean_v;
    if let Some(bias) = value.params_mut().last_mut() {
        *bias += shift;
    }
    for t in trajs {
        t.values.iter_mut().for_each(|v| *v += shift);
    }
}

pub(crate) fn rollout_summary(trajs: &[Trajectory]) -> (f64, f64, f64, f64) {
    let n = trajs.len() as f64;
    let mean_reward = trajs.iter().map(|t| t.breakdown.total).sum::<f64>() / n;
    let valid_rate = trajs.iter().filter(|t| t.breakdown.valid).count() as f64 / n;
    let steps: usize = trajs.iter().map(Trajectory::len).sum();
    let mean_kl = trajs.iter().flat_map(|t| &t.kls).sum::<f64>() / steps.max(1) as f64;
    let premise = trajs.iter().map(|t| t.premise_full).sum::<f64>() / n;
    (mean_reward, valid_rate, mean_kl, premise)
}

/// Run `config.epochs` rounds of collect → GAE → `update_passes` minibatch
/// passes. The reference policy is a frozen copy of `warm_start`.
pub fn train(
    warm_start: &PolicyParams,
    env: &Environment,
    config: &PpoConfig,
) -> Result<(PolicyParams, ValueParams, Vec<EpochStats>), PpoError> {
    use rand::seq::SliceRandom;

    config.validate()?;
    if env.items.is_empty() {
        return Err(PpoError::EmptyEnvironment);
    }
    let reference = warm_start.clone();
    let mut policy = warm_start.clone();
    let mut value = init_value(warm_start, config.seed)?;
    let mut opts = PpoOptimizers::new(&policy, &value, config);
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut trajs = collect_rollouts(&policy, &reference, &value, env, config, epoch as u64)?;
        if epoch == 0 {
            calibrate_value_bias(&mut value, &mut trajs);
        }
        for t in &mut trajs {
            let (adv, ret) = gae(&t.shaped, &t.values, config.gamma, config.gae_lambda)?;
            t.advantages = adv;
            t.returns = ret;
        }
        normalize_advantages(&mut trajs);

        let mut order: Vec<usize> = (0..trajs.len()).collect();
        let mut rng = crate::rng::seeded(config.seed, &[0x9b0, epoch as u64]);
        let (mut ratio, mut clipped, mut vloss, mut updates) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..config.update_passes {
            order.shuffle(&mut rng);
            for chunk in order.chunks(config.batch) {
                let batch: Vec<&Trajectory> = chunk.iter().map(|&i| &trajs[i]).collect();
                let s = ppo_update(&mut policy, &mut value, &mut opts, &batch, config)?;
                ratio += s.mean_ratio;
                clipped += s.clip_fraction;
                vloss += s.value_loss;
                updates += 1.0;
            }
        }
        let (mean_reward, valid_rate, mean_kl, premise_sim) = rollout_summary(&trajs);
        let per = |x: f64| if updates > 0.0 { x / updates } else { 0.0 };
        history.push(EpochStats {
            epoch: epoch + 1,
            mean_reward,
            valid_rate,
            mean_kl,
            premise_sim,
            mean_ratio: per(ratio),
            clip_fraction: per(clipped),
            value_loss: per(vloss),
        });
    }
    Ok((policy, value, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::gen_synthetic;
    use crate::knowledge_tree::KnowledgeTree;
    use crate::policy::TEMPLATE_WORDS;
    use crate::reward::RewardMode;
    use crate::syllogism::MarkerSet;
    use crate::HashEmbedder;

    struct Fixture {
        qa: Vec<crate::QaPair>,
        tree: KnowledgeTree,
        items: Vec<EnvItem>,
        vocab: Vocab,
        emb: HashEmbedder,
    }

    fn fixture() -> Fixture {
        let w = gen_synthetic(3, 5, 6, 10).unwrap();
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
        let qa = w.qa[..5].to_vec();
        let items = qa
            .iter()
            .map(|q| {
                let k = tree.retrieve(&q.question, &emb, 1, 3).unwrap().remove(0);
                EnvItem::new(&q.id, &q.question, &q.answer, k, &vocab)
            })
            .collect();
        Fixture {
            qa,
            tree,
            items,
            vocab,
            emb,
        }
    }

    fn env<'a>(f: &'a Fixture, mode: RewardMode) -> Environment<'a> {
        Environment {
            items: &f.items,
            vocab: &f.vocab,
            embedder: &f.emb,
            reward: RewardConfig {
                mode,
                ..Default::default()
            },
        }
    }

    fn small_config() -> PpoConfig {
        PpoConfig {
            max_len: 24,
            epochs: 2,
            ..Default::default()
        }
    }

    #[test]
    fn rollouts_are_item_major_and_internally_consistent() {
        let f = fixture();
        let env = env(&f, RewardMode::Full);
        let policy = Mlp::init(Hyper::policy(f.vocab.len()), 1).unwrap();
        let reference = Mlp::init(Hyper::policy(f.vocab.len()), 2).unwrap();
        let value = init_value(&policy, 3).unwrap();
        let cfg = small_config();
        let trajs = collect_rollouts(&policy, &reference, &value, &env, &cfg, 0).unwrap();
        assert_eq!(trajs.len(), 20);
        for (k, t) in trajs.iter().enumerate() {
            assert_eq!(t.item, k / 4);
            assert!(!t.is_empty() && t.len() <= cfg.max_len);
            assert!(t.tokens.last() == Some(&crate::policy::vocab::EOS) || t.len() == cfg.max_len);
            assert_eq!(t.logprobs.len(), t.len());
            assert_eq!(t.values.len(), t.len());
            assert!(t.kls.iter().all(|&k| k >= -1e-12));
            let lhs: f64 = t.shaped.iter().sum();
            let rhs = t.breakdown.total - cfg.beta * t.kls.iter().sum::<f64>();
            assert!((lhs - rhs).abs() <= 1e-12, "{lhs} vs {rhs}");
            if !t.breakdown.valid {
                assert_eq!(t.breakdown.total, 0.0);
                assert_eq!(t.premise_full, 0.0);
            }
        }
        // an untrained policy almost never emits all three markers in order
        assert!(trajs.iter().any(|t| !t.breakdown.valid));
        let again = collect_rollouts(&policy, &reference, &value, &env, &cfg, 0).unwrap();
        assert_eq!(trajs, again);
        let other_epoch = collect_rollouts(&policy, &reference, &value, &env, &cfg, 1).unwrap();
        assert_ne!(trajs, other_epoch);
    }

    #[test]
    fn policy_equal_to_reference_pays_no_kl() {
        let f = fixture();
        let env = env(&f, RewardMode::Full);
        let policy = Mlp::init(Hyper::policy(f.vocab.len()), 5).unwrap();
        let value = init_value(&policy, 5).unwrap();
        let trajs = collect_rollouts(&policy, &policy, &value, &env, &small_config(), 0).unwrap();
        for t in &trajs {
            assert!(t.kls.iter().all(|k| k.abs() <= 1e-12));
        }
    }

    #[test]
    fn conclusion_only_still_reports_full_premise() {
        let f = fixture();
        let data = crate::policy::build_warmup_dataset(
            &f.qa,
            &f.tree,
            &f.emb,
            &crate::policy::TemplatePathGen::default(),
            3,
            &f.vocab,
        )
        .unwrap();
        let init = Mlp::init(Hyper::policy(f.vocab.len()), 0).unwrap();
        let sft = crate::policy::SftConfig {
            epochs: 5,
            ..Default::default()
        };
        let (policy, _) = crate::policy::sft_train(init, &data, &sft).unwrap();
        let value = init_value(&policy, 0).unwrap();
        let env_c = env(&f, RewardMode::ConclusionOnly);
        let cfg = PpoConfig {
            rollouts_per_question: 2,
            ..Default::default()
        };
        let trajs = collect_rollouts(&policy, &policy, &value, &env_c, &cfg, 0).unwrap();
        assert!(trajs.iter().any(|t| t.breakdown.valid));
        for t in &trajs {
            assert_eq!(t.breakdown.premise_score(), 0.0);
            let item = &f.items[t.item];
            let full = crate::reward::score_path(
                &f.vocab.decode(&t.tokens),
                &item.knowledge,
                &item.question,
                &item.gold,
                &f.emb,
                &RewardConfig::default(),
            )
            .unwrap();
            assert_eq!(t.premise_full, full.premise_score());
            assert_eq!(t.breakdown.conclusion_score, full.conclusion_score);
        }
    }

    #[test]
    fn calibration_centres_the_critic_on_mean_return() {
        let f = fixture();
        let env = env(&f, RewardMode::Full);
        let policy = Mlp::init(Hyper::policy(f.vocab.len()), 1).unwrap();
        let mut value = init_value(&policy, 3).unwrap();
        let mut trajs =
            collect_rollouts(&policy, &policy, &value, &env, &small_config(), 0).unwrap();
        calibrate_value_bias(&mut value, &mut trajs);
        let target = trajs
            .iter()
            .map(|t| t.shaped.iter().sum::<f64>())
            .sum::<f64>()
            / trajs.len() as f64;
        let steps: usize = trajs.iter().map(Trajectory::len).sum();
        let mean_v = trajs.iter().flat_map(|t| &t.values).sum::<f64>() / steps as f64;
        assert!((mean_v - target).abs() < 1e-9);
        // stored values agree with what the shifted critic now predicts
        let t = &trajs[0];
        let v0 = value.forward(&t.context(&value, 0)).unwrap()[0];
        assert!((v0 - t.values[0]).abs() < 1e-9);
    }

    #[test]
    fn training_is_deterministic_and_leaves_the_warm_start_alone() {
        let f = fixture();
        let env = env(&f, RewardMode::Full);
        let warm = Mlp::init(Hyper::policy(f.vocab.len()), 9).unwrap();
        let before = warm.clone();
        let cfg = small_config();
        let (p1, v1, h1) = train(&warm, &env, &cfg).unwrap();
        let (p2, v2, h2) = train(&warm, &env, &cfg).unwrap();
        assert_eq!(warm, before);
        assert_eq!(h1.len(), cfg.epochs);
        assert_eq!((h1.clone(), p1.params()), (h2, p2.params()));
        assert_eq!(v1.params(), v2.params());
        assert_ne!(p1.params(), warm.params());
        assert_eq!(h1[0].epoch, 1);
        assert_eq!(h1[0].mean_kl, 0.0);
        assert!(h1.iter().all(|h| (0.0..=1.0).contains(&h.valid_rate)));
    }

    #[test]
    fn rejects_bad_configs_and_empty_environments() {
        for cfg in [
            PpoConfig {
                clip: 0.0,
                ..Default::default()
            },
            PpoConfig {
                lr: 0.0,
                ..Default::default()
            },
            PpoConfig {
                gae_lambda: 1.5,
                ..Default::default()
            },
            PpoConfig {
                beta: f64::NAN,
                ..Default::default()
            },
            PpoConfig {
                rollouts_per_question: 0,
                ..Default::default()
            },
            PpoConfig {
                batch: 0,
                ..Default::default()
            },
        ] {
            assert!(
                matches!(cfg.validate(), Err(PpoError::InvalidConfig(_))),
                "{cfg:?}"
            );
        }
        let f = fixture();
        let env = Environment {
            items: &[],
            ..env(&f, RewardMode::Full)
        };
        let warm = Mlp::init(Hyper::policy(f.vocab.len()), 0).unwrap();
        assert!(matches!(
            train(&warm, &env, &PpoConfig::default()),
            Err(PpoError::EmptyEnvironment)
        ));
    }
}
