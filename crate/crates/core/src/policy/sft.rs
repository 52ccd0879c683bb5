use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::mlp::Mlp;
use super::optim::Adam;
use super::vocab::EOS;
use super::PolicyError;
use crate::numeric::{log_softmax, softmax};
use crate::rng::seeded;

/// Toy-scale warm-up learning rate. A 7B model would use 5e-5.
pub const DEFAULT_SFT_LR: f64 = 5e-2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SftExample {
    /// Serialized knowledge, SEP, question.
    pub prompt: Vec<u32>,
    /// Rendered reasoning path followed by EOS.
    pub target: Vec<u32>,
}

impl SftExample {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.prompt.is_empty() {
            return Err(PolicyError::InvalidExample("empty prompt"));
        }
        if self.target.last() != Some(&EOS) {
            return Err(PolicyError::InvalidExample("target must end in EOS"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SftConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
}

impl Default for SftConfig {
    fn default() -> Self {
        Self {
            epochs: 3,
            lr: DEFAULT_SFT_LR,
            batch: 16,
            seed: 0,
        }
    }
}

/// Lowest ordinal among the maxima.
pub(crate) fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate() {
        if v > z[best] {
            best = i;
        }
    }
    best
}

/// Inverse-CDF draw from `softmax(logits)`.
pub fn sample_token(logits: &[f64], rng: &mut impl Rng) -> usize {
    let p = softmax(logits);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    // rounding left `acc` just below 1: fall back to the last supported token
    p.iter().rposition(|&x| x > 0.0).unwrap_or(0)
}

/// Generate until EOS (included) or `max_len` tokens. Greedy without `rng`.
pub fn decode<R: Rng>(
    params: &Mlp,
    prompt: &[u32],
    max_len: usize,
    mut rng: Option<&mut R>,
) -> Result<Vec<u32>, PolicyError> {
    if prompt.is_empty() {
        return Err(PolicyError::InvalidExample("empty prompt"));
    }
    let mut seq = prompt.to_vec();
    let mut out = Vec::new();
    while out.len() < max_len {
        let logits = params.forward(&params.window_of(&seq))?;
        let tok = match rng.as_deref_mut() {
            Some(r) => sample_token(&logits, r),
            None => argmax(&logits),
        } as u32;
        seq.push(tok);
        out.push(tok);
        if tok == EOS {
            break;
        }
    }
    Ok(out)
}

pub fn greedy_decode(
    params: &Mlp,
    prompt: &[u32],
    max_len: usize,
) -> Result<Vec<u32>, PolicyError> {
    decode::<rand_chacha::ChaCha8Rng>(params, prompt, max_len, None)
}

/// Teacher-forced mean token NLL over the target and its gradient.
pub fn nll_loss(params: &Mlp, example: &SftExample) -> Result<(f64, Vec<f64>), PolicyError> {
    example.validate()?;
    let mut grad = vec![0.0; params.params().len()];
    let mut seq = example.prompt.clone();
    let n = example.target.len() as f64;
    let mut loss = 0.0;
    for &tok in &example.target {
        let ctx = params.window_of(&seq);
        params.check_context(&ctx)?;
        if tok as usize >= params.hyper().out {
            return Err(PolicyError::OrdinalOutOfRange {
                ordinal: tok,
                size: params.hyper().out,
            });
        }
        let (logits, trace) = params.forward_traced(&ctx);
        let logp = log_softmax(&logits);
        loss -= logp[tok as usize] / n;
        let mut dy: Vec<f64> = logp.iter().map(|l| l.exp() / n).collect();
        dy[tok as usize] -= 1.0 / n;
        params.backward(&ctx, &trace, &dy, &mut grad);
        seq.push(tok);
    }
    Ok((loss, grad))
}

/// Mean loss and gradient over a batch. Per-example work runs in parallel;
/// the reduction is sequential so the result does not depend on scheduling.
pub(crate) fn batch_loss(
    params: &Mlp,
    batch: &[&SftExample],
) -> Result<(f64, Vec<f64>), PolicyError> {
    let parts = batch
        .par_iter()
        .map(|ex| nll_loss(params, ex))
        .collect::<Result<Vec<_>, _>>()?;
    let n = batch.len() as f64;
    let mut grad = vec![0.0; params.params().len()];
    let mut loss = 0.0;
    for (l, g) in parts {
        loss += l / n;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b / n;
        }
    }
    Ok((loss, grad))
}

/// Mini-batch Adam on mean NLL. Returns the mean training loss of each epoch.
pub fn sft_train(
    mut params: Mlp,
    dataset: &[SftExample],
    config: &SftConfig,
) -> Result<(Mlp, Vec<f64>), PolicyError> {
    if dataset.is_empty() {
        return Err(PolicyError::EmptyDataset);
    }
    if config.batch == 0 {
        return Err(PolicyError::InvalidHyper(
            "batch size must be positive".into(),
        ));
    }
    dataset.iter().try_for_each(SftExample::validate)?;
    let mut opt = Adam::new(config.lr, params.params().len());
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut seeded(config.seed, &[0x5f7, epoch as u64]));
        let mut total = 0.0;
        for chunk in order.chunks(config.batch) {
            let batch: Vec<&SftExample> = chunk.iter().map(|&i| &dataset[i]).collect();
            let (loss, grad) = batch_loss(&params, &batch)?;
            total += loss * batch.len() as f64;
            opt.step(params.params_mut(), &grad);
        }
        history.push(total / dataset.len() as f64);
    }
    Ok((params, history))
}

/// Max relative error between `analytic` and central differences of `f` on
/// the given coordinates: `|a - fd| / max(1e-8, |a| + |fd|)`.
pub fn finite_difference_check(
    params: &[f64],
    analytic: &[f64],
    coords: &[usize],
    eps: f64,
    mut f: impl FnMut(&[f64]) -> f64,
) -> f64 {
    let mut p = params.to_vec();
    let mut worst: f64 = 0.0;
    for &i in coords {
        let orig = p[i];
        p[i] = orig + eps;
        let up = f(&p);
        p[i] = orig - eps;
        let down = f(&p);
        p[i] = orig;
        let fd = (up - down) / (2.0 * eps);
        let err = (analytic[i] - fd).abs() / (analytic[i].abs() + fd.abs()).max(1e-8);
        worst = worst.max(err);
    }
    worst
}

/// Gradient check of [`nll_loss`] on `n_coords` random trainable coordinates.
pub fn grad_check(
    params: &Mlp,
    example: &SftExample,
    eps: f64,
    n_coords: usize,
    seed: u64,
) -> Result<f64, PolicyError> {
    let (_, grad) = nll_loss(params, example)?;
    let trainable: Vec<usize> = params.trainable().collect();
    let mut rng = seeded(seed, &[0x6c4]);
    let coords: Vec<usize> = (0..n_coords)
        .map(|_| trainable[rng.random_range(0..trainable.len())])
        .collect();
    let mut probe = params.clone();
    Ok(finite_difference_check(
        params.params(),
        &grad,
        &coords,
        eps,
        |p| {
            probe.params_mut().copy_from_slice(p);
            nll_loss(&probe, example)
                .map(|(l, _)| l)
                .unwrap_or(f64::NAN)
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::mlp::Hyper;
    use proptest::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn small(vocab: usize) -> Hyper {
        Hyper {
            window: 3,
            embed: 4,
            hidden: 6,
            vocab,
            out: vocab,
        }
    }

    fn example() -> SftExample {
        SftExample {
            prompt: vec![7, 8, 2, 9],
            target: vec![4, 10, 5, 11, 6, 12, 1],
        }
    }

    #[test]
    fn zero_params_give_log_vocab() {
        for v in [13, 50, 200] {
            let m = Mlp::zeros(small(v)).unwrap();
            let (loss, _) = nll_loss(&m, &example()).unwrap();
            assert!((loss - (v as f64).ln()).abs() <= 1e-12, "{loss}");
        }
    }

    // Parameters follow p[i] = 0.1 sin(0.7 i + 0.3) outside the PAD row;
    // the expected loss comes from tools/oracles/oracles.py.
    #[test]
    fn four_token_loss_matches_oracle() {
        let hyper = Hyper {
            window: 2,
            embed: 3,
            hidden: 4,
            vocab: 7,
            out: 7,
        };
        let mut m = Mlp::zeros(hyper).unwrap();
        for (i, p) in m.params_mut().iter_mut().enumerate().skip(3) {
            *p = 0.1 * (0.7 * i as f64 + 0.3).sin();
        }
        let ex = SftExample {
            prompt: vec![3, 4],
            target: vec![5, 6, 4, 1],
        };
        let (loss, _) = nll_loss(&m, &ex).unwrap();
        assert!((loss - FOUR_TOKEN_LOSS).abs() < 1e-12, "{loss:.17}");
    }
    const FOUR_TOKEN_LOSS: f64 = 1.912_502_138_937_924_4;

    #[test]
    fn one_small_step_decreases_loss() {
        let m = Mlp::init(small(13), 1).unwrap();
        let ex = example();
        let (before, grad) = nll_loss(&m, &ex).unwrap();
        let mut stepped = m.clone();
        for (p, g) in stepped.params_mut().iter_mut().zip(&grad) {
            *p -= 1e-2 * g;
        }
        let (after, _) = nll_loss(&stepped, &ex).unwrap();
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn grad_check_passes_on_random_configs() {
        for seed in 0..20u64 {
            let vocab = 13 + seed as usize;
            let m = Mlp::init(small(vocab), seed).unwrap();
            let err = grad_check(&m, &example(), 1e-4, 200, seed).unwrap();
            assert!(err <= 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn halving_eps_is_second_order() {
        let m = Mlp::init(small(13), 5).unwrap();
        let a = grad_check(&m, &example(), 1e-3, 200, 1).unwrap();
        let b = grad_check(&m, &example(), 5e-4, 200, 1).unwrap();
        assert!(b <= 4.0 * a.max(1e-12), "{a} -> {b}");
    }

    #[test]
    fn absent_token_row_has_zero_gradient() {
        let m = Mlp::init(small(20), 2).unwrap();
        let (_, grad) = nll_loss(&m, &example()).unwrap();
        let e = m.hyper().embed;
        assert!(grad[15 * e..16 * e].iter().all(|&g| g == 0.0));
        assert!(
            grad[..e].iter().all(|&g| g == 0.0),
            "PAD row must stay frozen"
        );
    }

    #[test]
    fn decode_contracts() {
        let m = Mlp::init(small(13), 3).unwrap();
        let greedy = decode::<ChaCha8Rng>(&m, &[7, 8], 20, None).unwrap();
        assert_eq!(greedy, decode::<ChaCha8Rng>(&m, &[7, 8], 20, None).unwrap());
        let s1 = decode(&m, &[7, 8], 20, Some(&mut seeded(9, &[]))).unwrap();
        let s2 = decode(&m, &[7, 8], 20, Some(&mut seeded(9, &[]))).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(decode::<ChaCha8Rng>(&m, &[7], 1, None).unwrap().len(), 1);
        assert!(decode::<ChaCha8Rng>(&m, &[], 1, None).is_err());
        assert!(decode::<ChaCha8Rng>(&m, &[13], 1, None).is_err());
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0; 4]), 0);
    }

    #[test]
    fn sft_training_contracts() {
        let m = Mlp::init(small(13), 4).unwrap();
        let data: Vec<SftExample> = (0..6)
            .map(|i| SftExample {
                prompt: vec![7 + (i % 3) as u32],
                target: vec![4, 10 + (i % 3) as u32, 1],
            })
            .collect();
        let cfg = SftConfig {
            epochs: 0,
            batch: 4,
            ..Default::default()
        };
        let (same, hist) = sft_train(m.clone(), &data, &cfg).unwrap();
        assert_eq!(same, m);
        assert!(hist.is_empty());

        let cfg = SftConfig {
            epochs: 3,
            batch: 4,
            seed: 1,
            lr: 1e-2,
        };
        let (a, ha) = sft_train(m.clone(), &data, &cfg).unwrap();
        let (b, hb) = sft_train(m.clone(), &data, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha, hb);
        assert!(ha.windows(2).all(|w| w[1] < w[0]), "{ha:?}");
        assert!(a.params()[..4].iter().all(|&x| x == 0.0));

        assert!(matches!(
            sft_train(m, &[], &cfg),
            Err(PolicyError::EmptyDataset)
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn greedy_is_invariant_to_logit_scaling(logits in prop::collection::vec(-5.0f64..5.0, 1..30), scale in 0.01f64..100.0) {
            let scaled: Vec<f64> = logits.iter().map(|x| x * scale).collect();
            prop_assert_eq!(argmax(&logits), argmax(&scaled));
        }

        #[test]
        fn greedy_decode_invariant_to_head_scaling(seed in 0u64..1000, scale in 0.1f64..10.0) {
            // scaling the output head scales every logit by the same factor
            let m = Mlp::init(small(13), seed).unwrap();
            let mut s = m.clone();
            let n = s.params().len();
            let head = n - (6 * 13 + 13);
            s.params_mut()[head..].iter_mut().for_each(|p| *p *= scale);
            let a = decode::<ChaCha8Rng>(&m, &[7, 8], 12, None).unwrap();
            let b = decode::<ChaCha8Rng>(&s, &[7, 8], 12, None).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
