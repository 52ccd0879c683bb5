use rand::Rng;

use super::vocab::PAD;
use super::PolicyError;
use crate::rng::seeded;

pub const DEFAULT_WINDOW: usize = 8;
pub const DEFAULT_EMBED: usize = 32;
pub const DEFAULT_HIDDEN: usize = 64;
const INIT_SCALE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hyper {
    pub window: usize,
    pub embed: usize,
    pub hidden: usize,
    pub vocab: usize,
    /// Width of the output head: `vocab` for the policy, 1 for the critic.
    pub out: usize,
}

impl Hyper {
    pub fn policy(vocab: usize) -> Self {
        Self {
            window: DEFAULT_WINDOW,
            embed: DEFAULT_EMBED,
            hidden: DEFAULT_HIDDEN,
            vocab,
            out: vocab,
        }
    }

    pub fn value(vocab: usize) -> Self {
        Self {
            out: 1,
            ..Self::policy(vocab)
        }
    }

    pub(crate) fn validate(&self) -> Result<(), PolicyError> {
        let dims = [self.window, self.embed, self.hidden, self.vocab, self.out];
        if dims.contains(&0) {
            return Err(PolicyError::InvalidHyper(format!(
                "zero dimension in {self:?}"
            )));
        }
        if self.vocab <= PAD as usize {
            return Err(PolicyError::InvalidHyper("vocabulary lacks PAD".into()));
        }
        dims.iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n <= 1 << 32)
            .ok_or_else(|| PolicyError::InvalidHyper(format!("{self:?} too large")))?;
        Ok(())
    }

    fn offsets(&self) -> Offsets {
        let embed = 0;
        let w1 = embed + self.vocab * self.embed;
        let b1 = w1 + self.window * self.embed * self.hidden;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.hidden * self.out;
        Offsets {
            w1,
            b1,
            w2,
            b2,
            end: b2 + self.out,
        }
    }

    pub fn param_count(&self) -> usize {
        self.offsets().end
    }
}

#[derive(Debug, Clone, Copy)]
struct Offsets {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    end: usize,
}

/// Embedding table, `(W·E)×H` hidden layer and `H×out` head, stored flat in
/// that order. Row-major throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    hyper: Hyper,
    seed: u64,
    params: Vec<f64>,
}

pub type PolicyParams = Mlp;

/// Activations kept from a forward pass for the backward pass.
pub(crate) struct Trace {
    x: Vec<f64>,
    h: Vec<f64>,
}

impl Mlp {
    /// Uniform(-0.1, 0.1) everywhere except the PAD embedding row.
    pub fn init(hyper: Hyper, seed: u64) -> Result<Self, PolicyError> {
        hyper.validate()?;
        let mut rng = seeded(seed, &[0x1417, hyper.out as u64]);
        let mut params: Vec<f64> = (0..hyper.param_count())
            .map(|_| rng.random_range(-INIT_SCALE..INIT_SCALE))
            .collect();
        params[Self::pad_row(&hyper)].fill(0.0);
        Ok(Self {
            hyper,
            seed,
            params,
        })
    }

    pub fn zeros(hyper: Hyper) -> Result<Self, PolicyError> {
        hyper.validate()?;
        Ok(Self {
            hyper,
            seed: 0,
            params: vec![0.0; hyper.param_count()],
        })
    }

    pub(crate) fn from_raw(hyper: Hyper, seed: u64, params: Vec<f64>) -> Result<Self, PolicyError> {
        hyper.validate()?;
        if params.len() != hyper.param_count() {
            return Err(PolicyError::InvalidHyper(format!(
                "{} parameters for shape needing {}",
                params.len(),
                hyper.param_count()
            )));
        }
        Ok(Self {
            hyper,
            seed,
            params,
        })
    }

    fn pad_row(h: &Hyper) -> std::ops::Range<usize> {
        let start = PAD as usize * h.embed;
        start..start + h.embed
    }

    pub fn hyper(&self) -> &Hyper {
        &self.hyper
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|x| x.is_finite())
    }

    /// Flat indices that receive gradient (everything but the PAD row).
    pub fn trainable(&self) -> impl Iterator<Item = usize> + '_ {
        let pad = Self::pad_row(&self.hyper);
        (0..self.params.len()).filter(move |i| !pad.contains(i))
    }

    /// The last `W` tokens of `seq`, left-padded with PAD.
    pub fn window_of(&self, seq: &[u32]) -> Vec<u32> {
        let w = self.hyper.window;
        let mut ctx = vec![PAD; w.saturating_sub(seq.len())];
        ctx.extend_from_slice(&seq[seq.len().saturating_sub(w)..]);
        ctx
    }

    pub(crate) fn check_context(&self, ctx: &[u32]) -> Result<(), PolicyError> {
        if ctx.len() != self.hyper.window {
            return Err(PolicyError::BadContext {
                expected: self.hyper.window,
                got: ctx.len(),
            });
        }
        match ctx.iter().find(|&&t| t as usize >= self.hyper.vocab) {
            Some(&ordinal) => Err(PolicyError::OrdinalOutOfRange {
                ordinal,
                size: self.hyper.vocab,
            }),
            None => Ok(()),
        }
    }

    /// Output for a context of exactly `W` ordinals.
    pub fn forward(&self, ctx: &[u32]) -> Result<Vec<f64>, PolicyError> {
        self.check_context(ctx)?;
        Ok(self.forward_traced(ctx).0)
    }

    pub(crate) fn forward_traced(&self, ctx: &[u32]) -> (Vec<f64>, Trace) {
        let Hyper {
            embed: e,
            hidden: hd,
            out,
            ..
        } = self.hyper;
        let o = self.hyper.offsets();
        let p = &self.params;

        let mut x = Vec::with_capacity(ctx.len() * e);
        for &t in ctx {
            let row = t as usize * e;
            x.extend_from_slice(&p[row..row + e]);
        }
        let mut h = p[o.b1..o.w2].to_vec();
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &p[o.w1 + i * hd..o.w1 + (i + 1) * hd];
            for (hj, wij) in h.iter_mut().zip(row) {
                *hj += xi * wij;
            }
        }
        h.iter_mut().for_each(|v| *v = v.tanh());
        let mut y = p[o.b2..o.end].to_vec();
        for (j, &hj) in h.iter().enumerate() {
            let row = &p[o.w2 + j * out..o.w2 + (j + 1) * out];
            for (yk, wjk) in y.iter_mut().zip(row) {
                *yk += hj * wjk;
            }
        }
        (y, Trace { x, h })
    }

    /// Accumulate `dL/dparams` into `grad` given `dL/doutput` at one context.
    pub(crate) fn backward(&self, ctx: &[u32], trace: &Trace, dy: &[f64], grad: &mut [f64]) {
        let Hyper {
            embed: e,
            hidden: hd,
            out,
            ..
        } = self.hyper;
        let o = self.hyper.offsets();
        let p = &self.params;

        for (g, d) in grad[o.b2..o.end].iter_mut().zip(dy) {
            *g += d;
        }
        let mut dh = vec![0.0; hd];
        for (j, &hj) in trace.h.iter().enumerate() {
            let w_row = &p[o.w2 + j * out..o.w2 + (j + 1) * out];
            let g_row = &mut grad[o.w2 + j * out..o.w2 + (j + 1) * out];
            let mut acc = 0.0;
            for k in 0..out {
                g_row[k] += hj * dy[k];
                acc += w_row[k] * dy[k];
            }
            dh[j] = acc * (1.0 - hj * hj);
        }
        for (g, d) in grad[o.b1..o.w2].iter_mut().zip(&dh) {
            *g += d;
        }
        for (i, &xi) in trace.x.iter().enumerate() {
            let tok = ctx[i / e];
            let w_row = &p[o.w1 + i * hd..o.w1 + (i + 1) * hd];
            let mut dx = 0.0;
            {
                let g_row = &mut grad[o.w1 + i * hd..o.w1 + (i + 1) * hd];
                for j in 0..hd {
                    g_row[j] += xi * dh[j];
                    dx += w_row[j] * dh[j];
                }
            }
            if tok != PAD {
                grad[tok as usize * e + i % e] += dx;
            }
        }
    }
}
