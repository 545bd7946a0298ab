//! Toy scorers and an independent greedy decoder.

use std::hash::{DefaultHasher, Hash, Hasher};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vtl::corpus::{Special, NUM_SPECIALS};
use vtl::decoding::{DecodeConfig, Scorer};
use vtl::Result;

/// Deterministic pseudo-random language model: the next-token distribution
/// is a pure function of `(seed, prefix)`.
pub struct ToyScorer {
    pub seed: u64,
    pub vocab: usize,
    /// Added to the EOS logit per emitted token, so outputs eventually end.
    pub eos_drift: f64,
    pub sharpness: f64,
}

impl ToyScorer {
    pub fn new(seed: u64, words: usize) -> Self {
        Self {
            seed,
            vocab: NUM_SPECIALS + words,
            eos_drift: 0.4,
            sharpness: 3.0,
        }
    }

    pub fn log_probs(&self, prefix: &[usize]) -> Vec<f64> {
        let mut h = DefaultHasher::new();
        (self.seed, prefix).hash(&mut h);
        let mut rng = ChaCha8Rng::seed_from_u64(h.finish());
        let mut logits: Vec<f64> = (0..self.vocab).map(|_| self.sharpness * rng.random_range(-1.0..1.0)).collect();
        logits[Special::Eos.id()] += self.eos_drift * prefix.len() as f64 - 2.0;
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z = logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln() + m;
        logits.iter().map(|l| l - z).collect()
    }
}

impl Scorer for ToyScorer {
    type State = Vec<usize>;

    fn initial(&self) -> Result<Vec<usize>> {
        Ok(Vec::new())
    }

    fn step(&self, states: &[&Vec<usize>], last: &[usize]) -> Result<Vec<(Vec<f64>, Vec<usize>)>> {
        Ok(states
            .iter()
            .zip(last)
            .map(|(s, &l)| {
                let mut next = (*s).clone();
                next.push(l);
                (self.log_probs(&next), next)
            })
            .collect())
    }
}

/// Step-by-step argmax under the same constraints beam search enforces:
/// specials other than EOS/UNK never emitted, EOS unavailable before
/// `min_len`, output cut at `max_len`, optional trigram blocking.
/// Ties go to the lowest id. Returns the tokens and their total log-prob.
pub fn greedy<S: Scorer>(scorer: &S, cfg: &DecodeConfig) -> (Vec<usize>, f64) {
    let eos = Special::Eos.id();
    let mut state = scorer.initial().unwrap();
    let mut out: Vec<usize> = Vec::new();
    let mut last = Special::Bos.id();
    let mut logp = 0.0;
    loop {
        let (lp, next) = scorer.step(&[&state], &[last]).unwrap().pop().unwrap();
        if out.len() >= cfg.max_len {
            logp += lp.get(eos).copied().filter(|v| v.is_finite()).unwrap_or(0.0);
            return (out, logp);
        }
        let mut best: Option<(usize, f64)> = None;
        for (t, &l) in lp.iter().enumerate() {
            let special = t < NUM_SPECIALS && t != eos && t != Special::Unk.id();
            if !l.is_finite() || special || (t == eos && out.len() < cfg.min_len) {
                continue;
            }
            if cfg.block_trigrams && t != eos && out.len() >= 2 {
                let tri = [out[out.len() - 2], out[out.len() - 1], t];
                if out.windows(3).any(|w| w == tri) {
                    continue;
                }
            }
            if best.is_none_or(|(_, b)| l > b) {
                best = Some((t, l));
            }
        }
        let Some((t, l)) = best else { return (out, logp) };
        logp += l;
        if t == eos {
            return (out, logp);
        }
        out.push(t);
        state = next;
        last = t;
    }
}
