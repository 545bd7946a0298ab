//! Beam search with length normalisation, minimum/maximum lengths and
//! trigram-repeat blocking, shared by every model family.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Special, NUM_SPECIALS};
use crate::error::{contract, Result};
use crate::models::recurrent::{RecurrentSession, RecurrentState};
use crate::models::transformer::TransformerSession;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub beam_size: usize,
    pub alpha: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub block_trigrams: bool,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            beam_size: 5,
            alpha: 0.95,
            min_len: 4,
            max_len: 50,
            block_trigrams: true,
        }
    }
}

impl DecodeConfig {
    /// Transformer families.
    pub fn pretrained_abs() -> Self {
        Self::default()
    }

    /// Recurrent families: beam 4, minimum length 5, average log-probability.
    pub fn recurrent() -> Self {
        Self {
            beam_size: 4,
            alpha: 1.0,
            min_len: 5,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 {
            return Err(contract("beam_size must be at least 1"));
        }
        if self.min_len < 1 || self.min_len >= self.max_len {
            return Err(contract(format!(
                "need 1 <= min_len < max_len, got {} / {}",
                self.min_len, self.max_len
            )));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(contract(format!("alpha must be finite and >= 0, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// `logp / length^alpha`.
pub fn length_penalized_score(logp: f64, length: usize, alpha: f64) -> f64 {
    logp / (length.max(1) as f64).powf(alpha)
}

/// A partial output during search.
#[derive(Clone, Debug)]
pub struct BeamHypothesis<S> {
    pub tokens: Vec<usize>,
    pub logp: f64,
    pub finished: bool,
    pub trigrams: HashSet<[usize; 3]>,
    state: S,
}

impl<S> BeamHypothesis<S> {
    fn last(&self) -> usize {
        self.tokens.last().copied().unwrap_or(Special::Bos.id())
    }
}

/// True iff appending `candidate` forms a trigram already present in `tokens`.
pub fn creates_repeat_trigram(tokens: &[usize], trigrams: &HashSet<[usize; 3]>, candidate: usize) -> bool {
    let n = tokens.len();
    n >= 2 && trigrams.contains(&[tokens[n - 2], tokens[n - 1], candidate])
}

/// All trigrams of a sequence.
pub fn trigram_set(tokens: &[usize]) -> HashSet<[usize; 3]> {
    tokens.windows(3).map(|w| [w[0], w[1], w[2]]).collect()
}

/// Next-token log-probabilities for a batch of decoder states.
pub trait Scorer {
    type State: Clone;

    fn initial(&self) -> Result<Self::State>;

    /// For each `(state, last)` return log-probabilities over output ids and
    /// the state after consuming `last`.
    fn step(&self, states: &[&Self::State], last: &[usize]) -> Result<Vec<(Vec<f64>, Self::State)>>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamResult {
    /// Output ids without `[EOS]`.
    pub tokens: Vec<usize>,
    pub logp: f64,
    pub score: f64,
    /// False when no hypothesis finished and the best alive one was returned.
    pub finished: bool,
}

fn blocked_id(id: usize) -> bool {
    id < NUM_SPECIALS && id != Special::Eos.id() && id != Special::Unk.id()
}

/// Best result over beam widths `1..=cfg.beam_size`, so widening the beam
/// never lowers the returned score. Ties keep the narrower beam; a finished
/// hypothesis always beats an unfinished one.
pub fn beam_search<S: Scorer>(scorer: &S, cfg: &DecodeConfig) -> Result<BeamResult> {
    cfg.validate()?;
    let mut cache = HashMap::new();
    let mut best = search(scorer, cfg, 1, &mut cache)?;
    for width in 2..=cfg.beam_size {
        let r = search(scorer, cfg, width, &mut cache)?;
        if (r.finished, r.score) > (best.finished, best.score) {
            best = r;
        }
    }
    Ok(best)
}

/// Scorer outputs keyed by the emitted prefix, shared across beam widths.
type StepCache<S> = HashMap<Vec<usize>, (Vec<f64>, <S as Scorer>::State)>;

/// Plain beam search of one width.
fn search<S: Scorer>(scorer: &S, cfg: &DecodeConfig, width: usize, cache: &mut StepCache<S>) -> Result<BeamResult> {
    let eos = Special::Eos.id();
    let mut alive = vec![BeamHypothesis {
        tokens: Vec::new(),
        logp: 0.0,
        finished: false,
        trigrams: HashSet::new(),
        state: scorer.initial()?,
    }];
    let mut finished: Vec<BeamHypothesis<S::State>> = Vec::new();
    let mut best_finished = f64::NEG_INFINITY;
    let score = |h: &BeamHypothesis<S::State>| length_penalized_score(h.logp, h.tokens.len(), cfg.alpha);
    loop {
        let missing: Vec<&BeamHypothesis<S::State>> = alive.iter().filter(|h| !cache.contains_key(&h.tokens)).collect();
        if !missing.is_empty() {
            let states: Vec<&S::State> = missing.iter().map(|h| &h.state).collect();
            let last: Vec<usize> = missing.iter().map(|h| h.last()).collect();
            for (h, o) in missing.iter().zip(scorer.step(&states, &last)?) {
                cache.insert(h.tokens.clone(), o);
            }
        }
        let out: Vec<&(Vec<f64>, S::State)> = alive.iter().map(|h| &cache[&h.tokens]).collect();
        // (logp, parent, token)
        let mut cands: Vec<(f64, usize, usize)> = Vec::new();
        for (p, (lp, _)) in out.iter().enumerate() {
            let h = &alive[p];
            let len = h.tokens.len();
            if len >= cfg.max_len {
                let l = lp.get(eos).copied().filter(|v| v.is_finite()).unwrap_or(0.0);
                cands.push((h.logp + l, p, eos));
                continue;
            }
            for (t, &l) in lp.iter().enumerate() {
                if !l.is_finite() || blocked_id(t) || (t == eos && len < cfg.min_len) {
                    continue;
                }
                if cfg.block_trigrams && t != eos && creates_repeat_trigram(&h.tokens, &h.trigrams, t) {
                    continue;
                }
                cands.push((h.logp + l, p, t));
            }
        }
        cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        cands.truncate(width);
        if cands.is_empty() {
            break;
        }
        let mut next = Vec::with_capacity(cands.len());
        for &(logp, p, t) in &cands {
            let parent = &alive[p];
            let mut tokens = parent.tokens.clone();
            let mut trigrams = parent.trigrams.clone();
            if t == eos {
                let h = BeamHypothesis {
                    tokens,
                    logp,
                    finished: true,
                    trigrams,
                    state: parent.state.clone(),
                };
                best_finished = best_finished.max(score(&h));
                finished.push(h);
                continue;
            }
            if tokens.len() >= 2 {
                trigrams.insert([tokens[tokens.len() - 2], tokens[tokens.len() - 1], t]);
            }
            tokens.push(t);
            let state = out[p].1.clone();
            next.push(BeamHypothesis {
                tokens,
                logp,
                finished: false,
                trigrams,
                state,
            });
        }
        alive = next;
        if alive.is_empty() {
            break;
        }
        let bound = alive
            .iter()
            .map(|h| if cfg.alpha > 0.0 { length_penalized_score(h.logp, cfg.max_len, cfg.alpha) } else { h.logp })
            .fold(f64::NEG_INFINITY, f64::max);
        if best_finished >= bound {
            break;
        }
    }
    let pick = |pool: &[BeamHypothesis<S::State>]| {
        pool.iter()
            .max_by(|a, b| score(a).total_cmp(&score(b)).then(b.tokens.len().cmp(&a.tokens.len())))
            .map(|h| BeamResult {
                tokens: h.tokens.clone(),
                logp: h.logp,
                score: score(h),
                finished: h.finished,
            })
    };
    if let Some(r) = pick(&finished) {
        return Ok(r);
    }
    Ok(pick(&alive).unwrap_or(BeamResult {
        tokens: Vec::new(),
        logp: f64::NEG_INFINITY,
        score: f64::NEG_INFINITY,
        finished: false,
    }))
}

impl Scorer for RecurrentSession<'_> {
    type State = RecurrentState;

    fn initial(&self) -> Result<RecurrentState> {
        Ok(RecurrentSession::initial(self))
    }

    fn step(&self, states: &[&RecurrentState], last: &[usize]) -> Result<Vec<(Vec<f64>, RecurrentState)>> {
        RecurrentSession::step(self, states, last)
    }
}

impl Scorer for TransformerSession<'_> {
    type State = Vec<usize>;

    fn initial(&self) -> Result<Vec<usize>> {
        Ok(Vec::new())
    }

    fn step(&self, states: &[&Vec<usize>], last: &[usize]) -> Result<Vec<(Vec<f64>, Vec<usize>)>> {
        let prefixes: Vec<Vec<usize>> = states
            .iter()
            .zip(last)
            .map(|(s, &l)| {
                let mut p = (*s).clone();
                p.push(l);
                p
            })
            .collect();
        let refs: Vec<&[usize]> = prefixes.iter().map(Vec::as_slice).collect();
        let lps = TransformerSession::step(self, &refs)?;
        Ok(lps.into_iter().zip(prefixes).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Fixed table of log-probabilities indexed by step.
    struct Table {
        rows: Vec<Vec<f64>>,
    }

    impl Scorer for Table {
        type State = usize;

        fn initial(&self) -> Result<usize> {
            Ok(0)
        }

        fn step(&self, states: &[&usize], _last: &[usize]) -> Result<Vec<(Vec<f64>, usize)>> {
            Ok(states
                .iter()
                .map(|&&s| (self.rows[s.min(self.rows.len() - 1)].clone(), s + 1))
                .collect())
        }
    }

    fn dist(v: usize, favour: usize, p: f64) -> Vec<f64> {
        let rest = (1.0 - p) / (v - 1) as f64;
        (0..v).map(|i| if i == favour { p.ln() } else { rest.ln() }).collect()
    }

    #[test]
    fn eos_first_model_stops_at_min_len() {
        let s = Table { rows: vec![dist(12, Special::Eos.id(), 0.9)] };
        let r = beam_search(&s, &DecodeConfig::default()).unwrap();
        assert_eq!(r.tokens.len(), 4);
        assert!(r.finished);
    }

    #[test]
    fn never_eos_is_truncated_at_max_len() {
        let mut rows = Vec::new();
        for i in 0..60 {
            let mut d = dist(70, NUM_SPECIALS + i, 0.9);
            d[Special::Eos.id()] = f64::NEG_INFINITY;
            rows.push(d);
        }
        let s = Table { rows };
        let r = beam_search(&s, &DecodeConfig::default()).unwrap();
        assert_eq!(r.tokens.len(), 50);
    }

    #[test]
    fn trigram_hand_cases() {
        let h = [1, 2, 3, 1, 2];
        assert!(creates_repeat_trigram(&h, &trigram_set(&h), 3));
        assert!(!creates_repeat_trigram(&h, &trigram_set(&h), 4));
        assert!(!creates_repeat_trigram(&[1], &trigram_set(&[1]), 1));
    }

    #[test]
    fn penalty_cases() {
        assert_eq!(length_penalized_score(-3.0, 7, 0.0), -3.0);
        assert_eq!(length_penalized_score(-10.0, 10, 1.0), -1.0);
    }

    #[test]
    fn invalid_configs() {
        let bad = DecodeConfig { beam_size: 0, ..DecodeConfig::default() };
        assert!(bad.validate().is_err());
        let bad = DecodeConfig { min_len: 50, ..DecodeConfig::default() };
        assert!(bad.validate().is_err());
    }
}
