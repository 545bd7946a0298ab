//! LSTM encoder-decoder with additive attention, the pointer-generator mixture
//! and coverage.
//!
//! Attention scores follow
//! `e_i = vᵀ tanh(W_h h_i + W_s s_t [+ w_c c_i] + b_attn)`, `a = softmax(e)`,
//! `h* = Σ a_i h_i`. The pointer gate is
//! `p_gen = σ(w_h*ᵀ h* + w_sᵀ s_t + w_xᵀ x_t + b_ptr)` and the output
//! distribution `P(w) = p_gen P_vocab(w) + (1 − p_gen) Σ_{i: w_i = w} a_i`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{pad_batch, Example, MASK_BIAS};
use crate::corpus::Special;
use crate::error::{contract, Result};
use crate::tensor::{Element, Graph, ParamId, ParamStore, Tensor, Var};

/// `p_gen` is squashed into `[m, 1 − m]` so it stays strictly inside (0, 1)
/// even when the f32 sigmoid saturates.
pub const P_GEN_MARGIN: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecurrentConfig {
    pub embed: usize,
    pub hidden: usize,
    pub pointer: bool,
    pub coverage: bool,
    pub coverage_weight: f64,
    pub max_src_len: usize,
    pub max_tgt_len: usize,
}

impl Default for RecurrentConfig {
    fn default() -> Self {
        Self {
            embed: 128,
            hidden: 128,
            pointer: false,
            coverage: false,
            coverage_weight: 1.0,
            max_src_len: 64,
            max_tgt_len: 50,
        }
    }
}

#[derive(Clone, Debug)]
struct Lstm {
    w_ih: ParamId,
    w_hh: ParamId,
    bias: ParamId,
}

#[derive(Clone, Debug)]
struct Params {
    emb: ParamId,
    enc: Lstm,
    dec: Lstm,
    bridge_h: (ParamId, ParamId),
    bridge_c: (ParamId, ParamId),
    attn_wh: ParamId,
    attn_ws: ParamId,
    attn_b: ParamId,
    attn_v: ParamId,
    attn_wc: Option<ParamId>,
    out1: (ParamId, ParamId),
    out2: (ParamId, ParamId),
    ptr: Option<(ParamId, ParamId)>,
}

/// Parameter handles; the values live in a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct RecurrentModel {
    pub cfg: RecurrentConfig,
    pub vocab_size: usize,
    p: Params,
}

/// Encoder outputs for a padded batch.
#[derive(Clone, Debug)]
pub struct EncoderState {
    /// `[B, S, H]`, one vector per source position.
    pub hidden: Var,
    /// `W_h h_i`, `[B, S, H]`.
    pub features: Var,
    /// `[B, S]`, 0 at real positions and a large negative value at padding.
    pub bias: Var,
    pub final_h: Var,
    pub final_c: Var,
    pub lens: Vec<usize>,
}

#[derive(Clone, Copy, Debug)]
pub struct AttentionOutput {
    /// `[B, S]`
    pub weights: Var,
    /// `[B, H]`
    pub context: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct StepOutput {
    pub h: Var,
    pub c: Var,
    pub attn: AttentionOutput,
    pub p_vocab: Var,
    pub p_gen: Option<Var>,
    /// Extended distribution when the pointer is on, else `p_vocab`.
    pub dist: Var,
}

/// Per-batch loss pieces, all already divided by the number of target tokens.
#[derive(Clone, Copy, Debug)]
pub struct LossParts {
    pub total: Var,
    pub nll: Var,
    pub coverage: Option<Var>,
    pub tokens: usize,
}

fn add_lstm<T: Element>(store: &mut ParamStore<T>, name: &str, input: usize, hidden: usize, rng: &mut impl Rng) -> Lstm {
    let w_ih = store.add_xavier(format!("{name}.w_ih"), input, 4 * hidden, rng);
    let w_hh = store.add_xavier(format!("{name}.w_hh"), hidden, 4 * hidden, rng);
    let mut b = vec![0.0; 4 * hidden];
    b[hidden..2 * hidden].fill(1.0);
    let bias = store.add(format!("{name}.bias"), Tensor::from_f64(&[4 * hidden], &b).expect("bias"));
    Lstm { w_ih, w_hh, bias }
}

fn add_linear<T: Element>(store: &mut ParamStore<T>, name: &str, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> (ParamId, ParamId) {
    let w = store.add_xavier(format!("{name}.w"), fan_in, fan_out, rng);
    let b = store.add_filled(format!("{name}.b"), &[fan_out], 0.0);
    (w, b)
}

fn linear<T: Element>(g: &mut Graph<T>, store: &ParamStore<T>, x: Var, (w, b): (ParamId, ParamId)) -> Result<Var> {
    let w = g.param(store, w);
    let b = g.param(store, b);
    let y = g.matmul(x, w)?;
    g.add(y, b)
}

/// One LSTM step on `[B, in]` inputs. Rows with `keep = 0` carry the previous state.
fn lstm_step<T: Element>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    cell: &Lstm,
    x: Var,
    h: Var,
    c: Var,
    keep: Option<&[T]>,
) -> Result<(Var, Var)> {
    let hidden = g.shape(h)[1];
    let w_ih = g.param(store, cell.w_ih);
    let w_hh = g.param(store, cell.w_hh);
    let bias = g.param(store, cell.bias);
    let xi = g.matmul(x, w_ih)?;
    let hh = g.matmul(h, w_hh)?;
    let gates = g.add(xi, hh)?;
    let gates = g.add(gates, bias)?;
    let i = g.slice_last(gates, 0, hidden)?;
    let f = g.slice_last(gates, hidden, hidden)?;
    let u = g.slice_last(gates, 2 * hidden, hidden)?;
    let o = g.slice_last(gates, 3 * hidden, hidden)?;
    let (i, f, u, o) = (g.sigmoid(i), g.sigmoid(f), g.tanh(u), g.sigmoid(o));
    let fc = g.mul(f, c)?;
    let iu = g.mul(i, u)?;
    let c_new = g.add(fc, iu)?;
    let tc = g.tanh(c_new);
    let h_new = g.mul(o, tc)?;
    let Some(keep) = keep else { return Ok((h_new, c_new)) };
    if keep.iter().all(|&k| k == T::one()) {
        return Ok((h_new, c_new));
    }
    let expand = |m: &dyn Fn(T) -> T| -> Vec<T> {
        keep.iter()
            .flat_map(|&k| std::iter::repeat_n(m(k), hidden))
            .collect()
    };
    let on = expand(&|k| k);
    let off = expand(&|k| T::one() - k);
    let mix = |g: &mut Graph<T>, new: Var, old: Var| -> Result<Var> {
        let a = g.mask(new, on.clone())?;
        let b = g.mask(old, off.clone())?;
        g.add(a, b)
    };
    Ok((mix(g, h_new, h)?, mix(g, c_new, c)?))
}

impl RecurrentModel {
    pub fn new<T: Element>(cfg: RecurrentConfig, vocab_size: usize, store: &mut ParamStore<T>, rng: &mut impl Rng) -> Self {
        let (e, h) = (cfg.embed, cfg.hidden);
        let emb = store.add_uniform("emb", &[vocab_size, e], 0.1, rng);
        let enc = add_lstm(store, "enc", e, h, rng);
        let dec = add_lstm(store, "dec", e, h, rng);
        let bridge_h = add_linear(store, "bridge_h", h, h, rng);
        let bridge_c = add_linear(store, "bridge_c", h, h, rng);
        let attn_wh = store.add_xavier("attn.w_h", h, h, rng);
        let attn_ws = store.add_xavier("attn.w_s", h, h, rng);
        let attn_b = store.add_filled("attn.b", &[h], 0.0);
        let attn_v = store.add_xavier("attn.v", h, 1, rng);
        let attn_wc = cfg.coverage.then(|| store.add_xavier("attn.w_c", 1, h, rng));
        let out1 = add_linear(store, "out1", 2 * h, h, rng);
        let out2 = add_linear(store, "out2", h, vocab_size, rng);
        let ptr = cfg.pointer.then(|| add_linear(store, "ptr", 2 * h + e, 1, rng));
        Self {
            cfg,
            vocab_size,
            p: Params {
                emb,
                enc,
                dec,
                bridge_h,
                bridge_c,
                attn_wh,
                attn_ws,
                attn_b,
                attn_v,
                attn_wc,
                out1,
                out2,
                ptr,
            },
        }
    }

    /// Encode a padded batch of source id sequences.
    pub fn encode<T: Element>(&self, g: &mut Graph<T>, store: &ParamStore<T>, src: &[&[usize]]) -> Result<EncoderState> {
        if src.is_empty() || src.iter().any(|s| s.is_empty()) {
            return Err(contract("encode needs non-empty source sequences"));
        }
        let b = src.len();
        let hdim = self.cfg.hidden;
        let (ids, width, lens) = pad_batch(src, Special::Pad.id());
        let emb = g.param(store, self.p.emb);
        let mut h = g.constant(Tensor::zeros(&[b, hdim]));
        let mut c = g.constant(Tensor::zeros(&[b, hdim]));
        let mut states = Vec::with_capacity(width);
        for t in 0..width {
            let step_ids: Vec<usize> = (0..b).map(|r| ids[r * width + t]).collect();
            let keep: Vec<T> = lens.iter().map(|&l| if t < l { T::one() } else { T::zero() }).collect();
            let x = g.rows(emb, &step_ids)?;
            (h, c) = lstm_step(g, store, &self.p.enc, x, h, c, Some(&keep))?;
            states.push(h);
        }
        let flat = g.concat(&states)?;
        let hidden = g.reshape(flat, &[b, width, hdim])?;
        let wh = g.param(store, self.p.attn_wh);
        let features = g.matmul(hidden, wh)?;
        let bias_data: Vec<f64> = (0..b * width)
            .map(|i| if i % width < lens[i / width] { 0.0 } else { MASK_BIAS })
            .collect();
        let bias = g.constant_f64(&[b, width], &bias_data)?;
        Ok(EncoderState {
            hidden,
            features,
            bias,
            final_h: h,
            final_c: c,
            lens,
        })
    }

    /// Decoder start state: linear projections of the final encoder state.
    pub fn initial_state<T: Element>(&self, g: &mut Graph<T>, store: &ParamStore<T>, enc: &EncoderState) -> Result<(Var, Var)> {
        let h = linear(g, store, enc.final_h, self.p.bridge_h)?;
        let c = linear(g, store, enc.final_c, self.p.bridge_c)?;
        Ok((h, c))
    }

    /// Additive attention of decoder state `s: [B, H]` over the encoder states.
    pub fn attend<T: Element>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        enc: &EncoderState,
        s: Var,
        coverage: Option<Var>,
    ) -> Result<AttentionOutput> {
        let shape = g.shape(enc.hidden).to_vec();
        let (b, n, hdim) = (shape[0], shape[1], shape[2]);
        let ws = g.param(store, self.p.attn_ws);
        let ab = g.param(store, self.p.attn_b);
        let dec = g.matmul(s, ws)?;
        let dec = g.add(dec, ab)?;
        let dec = g.reshape(dec, &[b, 1, hdim])?;
        let mut e = g.add(enc.features, dec)?;
        if let (Some(cov), Some(wc)) = (coverage, self.p.attn_wc) {
            let wc = g.param(store, wc);
            let cov = g.reshape(cov, &[b, n, 1])?;
            let cf = g.matmul(cov, wc)?;
            e = g.add(e, cf)?;
        }
        let e = g.tanh(e);
        let v = g.param(store, self.p.attn_v);
        let scores = g.matmul(e, v)?;
        let scores = g.reshape(scores, &[b, n])?;
        let scores = g.add(scores, enc.bias)?;
        let weights = g.softmax(scores)?;
        let w3 = g.reshape(weights, &[b, 1, n])?;
        let ctx = g.matmul(w3, enc.hidden)?;
        let context = g.reshape(ctx, &[b, hdim])?;
        Ok(AttentionOutput { weights, context })
    }

    /// One decoder step from the previous output ids.
    #[allow(clippy::too_many_arguments)]
    pub fn decode_step<T: Element>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        enc: &EncoderState,
        prev: &[usize],
        h: Var,
        c: Var,
        coverage: Option<Var>,
        src_ext: &[usize],
        ext_width: usize,
    ) -> Result<StepOutput> {
        let emb = g.param(store, self.p.emb);
        let prev: Vec<usize> = prev
            .iter()
            .map(|&i| if i < self.vocab_size { i } else { Special::Unk.id() })
            .collect();
        let x = g.rows(emb, &prev)?;
        let (h, c) = lstm_step(g, store, &self.p.dec, x, h, c, None)?;
        let attn = self.attend(g, store, enc, h, coverage)?;
        let p_vocab = self.vocab_distribution(g, store, h, attn)?;
        let Some(ptr) = self.p.ptr else {
            return Ok(StepOutput {
                h,
                c,
                attn,
                p_vocab,
                p_gen: None,
                dist: p_vocab,
            });
        };
        let feats = g.concat(&[attn.context, h, x])?;
        let logit = linear(g, store, feats, ptr)?;
        let gate = g.sigmoid(logit);
        let p_gen = g.affine(gate, 1.0 - 2.0 * P_GEN_MARGIN, P_GEN_MARGIN);
        let dist = pointer_mixture(g, p_vocab, p_gen, attn.weights, src_ext, ext_width)?;
        Ok(StepOutput {
            h,
            c,
            attn,
            p_vocab,
            p_gen: Some(p_gen),
            dist,
        })
    }

    /// `softmax(W2 (W1 [s; h*] + b1) + b2)`.
    pub fn vocab_distribution<T: Element>(&self, g: &mut Graph<T>, store: &ParamStore<T>, s: Var, attn: AttentionOutput) -> Result<Var> {
        let joined = g.concat(&[s, attn.context])?;
        let hid = linear(g, store, joined, self.p.out1)?;
        let logits = linear(g, store, hid, self.p.out2)?;
        g.softmax(logits)
    }

    /// Teacher-forced loss, mean per target token, plus weighted coverage.
    pub fn loss<T: Element>(&self, g: &mut Graph<T>, store: &ParamStore<T>, batch: &[&Example], coverage: bool) -> Result<LossParts> {
        let src: Vec<&[usize]> = batch.iter().map(|e| e.src.as_slice()).collect();
        let enc = self.encode(g, store, &src)?;
        let (mut h, mut c) = self.initial_state(g, store, &enc)?;
        let b = batch.len();
        let width = enc.lens.iter().copied().max().unwrap_or(0);
        let (src_ext, _, _) = pad_batch(&batch.iter().map(|e| e.src_ext.as_slice()).collect::<Vec<_>>(), Special::Pad.id());
        let ext_width = self.vocab_size + batch.iter().map(|e| e.oov.len()).max().unwrap_or(0);
        let steps = batch.iter().map(|e| e.tgt_out.len()).max().unwrap_or(0);
        let tokens: usize = batch.iter().map(|e| e.tgt_out.len()).sum();
        let inv = 1.0 / tokens as f64;
        let use_cov = coverage && self.cfg.coverage;
        let mut cov = use_cov.then(|| g.constant(Tensor::zeros(&[b, width])));
        let mut nll_terms = Vec::with_capacity(steps);
        let mut cov_terms = Vec::new();
        for t in 0..steps {
            let prev: Vec<usize> = batch.iter().map(|e| e.tgt_in.get(t).copied().unwrap_or(Special::Pad.id())).collect();
            let step = self.decode_step(g, store, &enc, &prev, h, c, cov, &src_ext, ext_width)?;
            h = step.h;
            c = step.c;
            let targets: Vec<usize> = batch.iter().map(|e| e.tgt_out.get(t).copied().unwrap_or(Special::Pad.id())).collect();
            let weights: Vec<f64> = batch.iter().map(|e| if t < e.tgt_out.len() { inv } else { 0.0 }).collect();
            nll_terms.push(g.nll_loss(step.dist, &targets, &weights)?);
            if let Some(cv) = cov {
                let overlap = coverage_overlap(g, step.attn.weights, cv)?;
                let w: Vec<T> = weights
                    .iter()
                    .flat_map(|&w| std::iter::repeat_n(T::from_f64(w * self.cfg.coverage_weight), width))
                    .collect();
                let weighted = g.mask(overlap, w)?;
                cov_terms.push(g.sum(weighted));
                cov = Some(g.add(cv, step.attn.weights)?);
            }
        }
        let nll = sum_all(g, &nll_terms)?;
        let coverage = if cov_terms.is_empty() { None } else { Some(sum_all(g, &cov_terms)?) };
        let total = match coverage {
            Some(cl) => g.add(nll, cl)?,
            None => nll,
        };
        Ok(LossParts {
            total,
            nll,
            coverage,
            tokens,
        })
    }

    pub fn param_ids<T: Element>(&self, store: &ParamStore<T>) -> Vec<ParamId> {
        store.ids().collect()
    }
}

fn sum_all<T: Element>(g: &mut Graph<T>, terms: &[Var]) -> Result<Var> {
    let joined = g.concat(terms)?;
    Ok(g.sum(joined))
}

/// Elementwise `min(a, c)`; summing gives the coverage loss of one step.
pub fn coverage_overlap<T: Element>(g: &mut Graph<T>, attn: Var, coverage: Var) -> Result<Var> {
    g.minimum(attn, coverage)
}

/// `Σ_i min(a_i, c_i)` for one attention vector and its coverage.
pub fn coverage_loss<T: Element>(g: &mut Graph<T>, attn: Var, coverage: Var) -> Result<Var> {
    let m = coverage_overlap(g, attn, coverage)?;
    Ok(g.sum(m))
}

/// Mix generation and copying into a distribution over `ext_width` ids.
///
/// `p_vocab: [B, V]`, `p_gen: [B, 1]`, `attn: [B, S]`, `src_ext` holds the
/// `B × S` extended ids of the source positions.
pub fn pointer_mixture<T: Element>(
    g: &mut Graph<T>,
    p_vocab: Var,
    p_gen: Var,
    attn: Var,
    src_ext: &[usize],
    ext_width: usize,
) -> Result<Var> {
    let gen = g.mul(p_vocab, p_gen)?;
    let gen = g.pad_last(gen, ext_width)?;
    let copy_gate = g.affine(p_gen, -1.0, 1.0);
    let copy = g.mul(attn, copy_gate)?;
    g.scatter_add(gen, copy, src_ext)
}

/// Per-hypothesis decoder state kept by beam search.
#[derive(Clone, Debug)]
pub struct RecurrentState {
    pub h: Vec<f32>,
    pub c: Vec<f32>,
    pub coverage: Vec<f32>,
}

/// Frozen-weight decoder for one source, stepping many hypotheses at once.
pub struct RecurrentSession<'a> {
    model: &'a RecurrentModel,
    store: &'a ParamStore<f32>,
    hidden: Tensor<f32>,
    features: Tensor<f32>,
    src_ext: Vec<usize>,
    ext_width: usize,
    init: RecurrentState,
}

impl<'a> RecurrentSession<'a> {
    pub fn new(model: &'a RecurrentModel, store: &'a ParamStore<f32>, ex: &Example) -> Result<Self> {
        let mut g = Graph::new();
        let enc = model.encode(&mut g, store, &[ex.src.as_slice()])?;
        let (h, c) = model.initial_state(&mut g, store, &enc)?;
        Ok(Self {
            model,
            store,
            hidden: g.value(enc.hidden).clone(),
            features: g.value(enc.features).clone(),
            src_ext: ex.src_ext.clone(),
            ext_width: model.vocab_size + ex.oov.len(),
            init: RecurrentState {
                h: g.data(h).to_vec(),
                c: g.data(c).to_vec(),
                coverage: vec![0.0; ex.src.len()],
            },
        })
    }

    pub fn output_size(&self) -> usize {
        self.ext_width
    }

    pub fn initial(&self) -> RecurrentState {
        self.init.clone()
    }

    /// Next-token log-probabilities for each `(state, last token)` pair.
    pub fn step(&self, states: &[&RecurrentState], last: &[usize]) -> Result<Vec<(Vec<f64>, RecurrentState)>> {
        let k = states.len();
        let n = self.src_ext.len();
        let hd = self.model.cfg.hidden;
        let mut g = Graph::new();
        let tile = |t: &Tensor<f32>| -> Tensor<f32> {
            let data: Vec<f32> = (0..k).flat_map(|_| t.data().iter().copied()).collect();
            Tensor::new(&[k, n, hd], data).expect("tile")
        };
        let enc = EncoderState {
            hidden: g.constant(tile(&self.hidden)),
            features: g.constant(tile(&self.features)),
            bias: g.constant(Tensor::zeros(&[k, n])),
            final_h: g.constant(Tensor::zeros(&[k, hd])),
            final_c: g.constant(Tensor::zeros(&[k, hd])),
            lens: vec![n; k],
        };
        let stack = |f: &dyn Fn(&RecurrentState) -> &Vec<f32>, w: usize| -> Tensor<f32> {
            Tensor::new(&[k, w], states.iter().flat_map(|s| f(s).iter().copied()).collect()).expect("stack")
        };
        let h = g.constant(stack(&|s| &s.h, hd));
        let c = g.constant(stack(&|s| &s.c, hd));
        let cov = self.model.cfg.coverage.then(|| g.constant(stack(&|s| &s.coverage, n)));
        let src_ext: Vec<usize> = (0..k).flat_map(|_| self.src_ext.iter().copied()).collect();
        let out = self.model.decode_step(&mut g, self.store, &enc, last, h, c, cov, &src_ext, self.ext_width)?;
        let dist = g.data(out.dist);
        let (hs, cs, ws) = (g.data(out.h), g.data(out.c), g.data(out.attn.weights));
        let width = self.ext_width;
        Ok((0..k)
            .map(|r| {
                let lp = dist[r * width..(r + 1) * width]
                    .iter()
                    .map(|&p| (p as f64).max(1e-30).ln())
                    .collect();
                let coverage = states[r]
                    .coverage
                    .iter()
                    .zip(&ws[r * n..(r + 1) * n])
                    .map(|(a, b)| a + b)
                    .collect();
                let st = RecurrentState {
                    h: hs[r * hd..(r + 1) * hd].to_vec(),
                    c: cs[r * hd..(r + 1) * hd].to_vec(),
                    coverage,
                };
                (lp, st)
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(pointer: bool, coverage: bool) -> (RecurrentModel, ParamStore<f64>) {
        let cfg = RecurrentConfig {
            embed: 4,
            hidden: 5,
            pointer,
            coverage,
            ..RecurrentConfig::default()
        };
        let mut store = ParamStore::new();
        let m = RecurrentModel::new(cfg, 12, &mut store, &mut ChaCha8Rng::seed_from_u64(3));
        (m, store)
    }

    #[test]
    fn singleton_attention_is_one() {
        let (m, store) = small(false, false);
        let mut g = Graph::new();
        let enc = m.encode(&mut g, &store, &[&[7]]).unwrap();
        assert_eq!(g.shape(enc.hidden), &[1, 1, 5]);
        let (h, _) = m.initial_state(&mut g, &store, &enc).unwrap();
        let a = m.attend(&mut g, &store, &enc, h, None).unwrap();
        assert_eq!(g.data(a.weights), &[1.0]);
        assert_eq!(g.data(a.context), g.data(enc.hidden));
    }

    #[test]
    fn empty_source_is_contract_error() {
        let (m, store) = small(false, false);
        let mut g = Graph::new();
        assert!(m.encode(&mut g, &store, &[&[]]).is_err());
    }

    #[test]
    fn padding_does_not_change_encoding() {
        let (m, store) = small(false, false);
        let mut g = Graph::new();
        let alone = m.encode(&mut g, &store, &[&[4, 5]]).unwrap();
        let padded = m.encode(&mut g, &store, &[&[4, 5], &[6, 7, 8, 9]]).unwrap();
        let a = g.data(alone.final_h).to_vec();
        let p = g.data(padded.final_h)[..5].to_vec();
        assert_eq!(a, p);
    }

    #[test]
    fn coverage_loss_hand_case() {
        let mut g = Graph::<f64>::new();
        let a = g.constant_f64(&[2], &[0.7, 0.3]).unwrap();
        let c = g.constant_f64(&[2], &[0.2, 0.9]).unwrap();
        let l = coverage_loss(&mut g, a, c).unwrap();
        assert!((g.data(l)[0] - 0.5).abs() < 1e-15);
    }
}
