use rayon::prelude::*;

use super::{PpoConfig, PpoError, PpoOptimizers, Trajectory, ValueParams};
use crate::numeric::log_softmax;
use crate::policy::PolicyParams;

const ADV_STD_FLOOR: f64 = 1e-8;

/// Episodic GAE with a zero bootstrap after the last step.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), PpoError> {
    if rewards.len() != values.len() || rewards.is_empty() {
        return Err(PpoError::LengthMismatch(rewards.len(), values.len()));
    }
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let next = if t + 1 < n { values[t + 1] } else { 0.0 };
        let delta = rewards[t] + gamma * next - values[t];
        running = delta + gamma * lambda * running;
        adv[t] = running;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, ret))
}

/// Shift and scale every advantage in the batch to mean 0, std 1.
pub fn normalize_advantages(batch: &mut [Trajectory]) {
    let n = batch.iter().map(|t| t.advantages.len()).sum::<usize>();
    if n == 0 {
        return;
    }
    let all = || batch.iter().flat_map(|t| t.advantages.iter());
    let mean = all().sum::<f64>() / n as f64;
    let var = all().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64;
    let std = var.sqrt().max(ADV_STD_FLOOR);
    for t in batch.iter_mut() {
        t.advantages.iter_mut().for_each(|a| *a = (*a - mean) / std);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
}

fn total_steps(batch: &[&Trajectory]) -> Result<usize, PpoError> {
    let n: usize = batch.iter().map(|t| t.len()).sum();
    if n == 0 {
        return Err(PpoError::EmptyBatch);
    }
    Ok(n)
}

/// Sum per-trajectory `(loss, grad, extra)` parts in batch order.
fn reduce(parts: Vec<(f64, Vec<f64>, [f64; 2])>, n_params: usize) -> (f64, Vec<f64>, [f64; 2]) {
    let mut grad = vec![0.0; n_params];
    let (mut loss, mut extra) = (0.0, [0.0; 2]);
    for (l, g, e) in parts {
        loss += l;
        grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        extra[0] += e[0];
        extra[1] += e[1];
    }
    (loss, grad, extra)
}

/// Negated clipped surrogate averaged over all steps, and its gradient.
///
/// Where the clipped branch is strictly smaller the step contributes no
/// gradient; on ties the unclipped branch is used.
pub fn surrogate_loss(
    policy: &PolicyParams,
    batch: &[&Trajectory],
    clip: f64,
) -> Result<(f64, Vec<f64>, UpdateStats), PpoError> {
    let n = total_steps(batch)? as f64;
    let parts = batch
        .par_iter()
        .map(|traj| {
            let mut grad = vec![0.0; policy.params().len()];
            let (mut loss, mut ratio_sum, mut clipped) = (0.0, 0.0, 0.0);
            for t in 0..traj.len() {
                let ctx = traj.context(policy, t);
                policy.check_context(&ctx)?;
                let (logits, trace) = policy.forward_traced(&ctx);
                let lp = log_softmax(&logits);
                let a = traj.tokens[t] as usize;
                let adv = traj.advantages[t];
                let rho = (lp[a] - traj.logprobs[t]).exp();
                let unclipped = rho * adv;
                let bounded = rho.clamp(1.0 - clip, 1.0 + clip) * adv;
                loss -= unclipped.min(bounded) / n;
                ratio_sum += rho;
                if (rho - 1.0).abs() > clip {
                    clipped += 1.0;
                }
                if unclipped <= bounded {
                    // d(-rho A)/dlogits = -rho A (onehot - softmax)
                    let scale = -unclipped / n;
                    let mut dy: Vec<f64> = lp.iter().map(|l| -scale * l.exp()).collect();
                    dy[a] += scale;
                    policy.backward(&ctx, &trace, &dy, &mut grad);
                }
            }
            Ok((loss, grad, [ratio_sum, clipped]))
        })
        .collect::<Result<Vec<_>, PpoError>>()?;
    let (loss, grad, [ratio_sum, clipped]) = reduce(parts, policy.params().len());
    Ok((
        loss,
        grad,
        UpdateStats {
            policy_loss: loss,
            mean_ratio: ratio_sum / n,
            clip_fraction: clipped / n,
            ..Default::default()
        },
    ))
}

/// `mean ½(V − R)²` over all steps, and its gradient.
pub fn value_loss(value: &ValueParams, batch: &[&Trajectory]) -> Result<(f64, Vec<f64>), PpoError> {
    let n = total_steps(batch)? as f64;
    let parts = batch
        .par_iter()
        .map(|traj| {
            let mut grad = vec![0.0; value.params().len()];
            let mut loss = 0.0;
            for t in 0..traj.len() {
                let ctx = traj.context(value, t);
                value.check_context(&ctx)?;
                let (out, trace) = value.forward_traced(&ctx);
                let err = out[0] - traj.returns[t];
                loss += 0.5 * err * err / n;
                value.backward(&ctx, &trace, &[err / n], &mut grad);
            }
            Ok((loss, grad, [0.0; 2]))
        })
        .collect::<Result<Vec<_>, PpoError>>()?;
    let (loss, grad, _) = reduce(parts, value.params().len());
    Ok((loss, grad))
}

/// One Adam step on the surrogate and one on the value loss.
pub fn ppo_update(
    policy: &mut PolicyParams,
    value: &mut ValueParams,
    opts: &mut PpoOptimizers,
    batch: &[&Trajectory],
    config: &PpoConfig,
) -> Result<UpdateStats, PpoError> {
    if batch.is_empty() {
        return Err(PpoError::EmptyBatch);
    }
    for t in batch {
        if t.advantages.len() != t.len() || t.returns.len() != t.len() {
            return Err(PpoError::LengthMismatch(t.advantages.len(), t.len()));
        }
    }
    let (_, pgrad, mut stats) = surrogate_loss(policy, batch, config.clip)?;
    let (vloss, vgrad) = value_loss(value, batch)?;
    opts.policy.step(policy.params_mut(), &pgrad);
    opts.value.step(value.params_mut(), &vgrad);
    stats.value_loss = vloss;
    Ok(stats)
}
