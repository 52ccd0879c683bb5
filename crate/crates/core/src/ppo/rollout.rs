use rayon::prelude::*;

use super::{EnvItem, Environment, PpoConfig, PpoError, Trajectory, ValueParams};
use crate::numeric::log_softmax;
use crate::policy::vocab::EOS;
use crate::policy::PolicyParams;
use crate::reward::{kl_from_log_probs, score_path, shaped_rewards, RewardConfig, RewardMode};
use crate::rng::seeded;

/// `rollouts_per_question` sampled responses per item, in item-major order.
///
/// Each rollout draws from its own stream derived from
/// `(seed, epoch, item, rollout)`, so the thread pool never changes results.
pub fn collect_rollouts(
    policy: &PolicyParams,
    reference: &PolicyParams,
    value: &ValueParams,
    env: &Environment,
    config: &PpoConfig,
    epoch: u64,
) -> Result<Vec<Trajectory>, PpoError> {
    if env.items.is_empty() {
        return Err(PpoError::EmptyEnvironment);
    }
    let jobs: Vec<(usize, usize)> = (0..env.items.len())
        .flat_map(|i| (0..config.rollouts_per_question).map(move |r| (i, r)))
        .collect();
    jobs.par_iter()
        .map(|&(i, r)| {
            let mut rng = seeded(config.seed, &[0x7011, epoch, i as u64, r as u64]);
            rollout(policy, reference, value, env, config, i, &mut rng)
        })
        .collect()
}

fn rollout(
    policy: &PolicyParams,
    reference: &PolicyParams,
    value: &ValueParams,
    env: &Environment,
    config: &PpoConfig,
    index: usize,
    rng: &mut impl rand::Rng,
) -> Result<Trajectory, PpoError> {
    let item: &EnvItem = &env.items[index];
    let mut seq = item.prompt.clone();
    let (mut tokens, mut logprobs, mut kls, mut values) = (vec![], vec![], vec![], vec![]);
    while tokens.len() < config.max_len {
        let ctx = policy.window_of(&seq);
        let logits = policy.forward(&ctx)?;
        let lp = log_softmax(&logits);
        let lq = log_softmax(&reference.forward(&ctx)?);
        let tok = crate::policy::sample_token(&logits, rng) as u32;
        values.push(value.forward(&ctx)?[0]);
        kls.push(kl_from_log_probs(&lp, &lq));
        logprobs.push(lp[tok as usize]);
        tokens.push(tok);
        seq.push(tok);
        if tok == EOS {
            break;
        }
    }
    let text = env.vocab.decode(&tokens);
    let score = |cfg: &RewardConfig| {
        score_path(
            &text,
            &item.knowledge,
            &item.question,
            &item.gold,
            env.embedder,
            cfg,
        )
    };
    let breakdown = score(&env.reward)?;
    let premise_full = match env.reward.mode {
        RewardMode::Full => breakdown.premise_score(),
        RewardMode::ConclusionOnly => score(&RewardConfig {
            mode: RewardMode::Full,
            ..env.reward.clone()
        })?
        .premise_score(),
    };
    let shaped = shaped_rewards(&kls, breakdown.total, config.beta)?;
    Ok(Trajectory {
        item: index,
        prompt: item.prompt.clone(),
        tokens,
        logprobs,
        kls,
        values,
        breakdown,
        premise_full,
        shaped,
        advantages: Vec::new(),
        returns: Vec::new(),
    })
}
