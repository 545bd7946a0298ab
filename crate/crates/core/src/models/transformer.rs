//! Post-norm transformer encoder-decoder with a masked-LM head.
//!
//! Each layer computes `h̃ = LN(h + MHAtt(h))`, `h' = LN(h̃ + FFN(h̃))`;
//! decoder layers cross-attend to the encoder output between the two.
//! Encoder inputs are `[CLS] w1 .. wn [SEP]` embedded as
//! `x_i = E_token + E_pos + E_A`.

use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use super::{pad_batch, Example, MASK_BIAS};
use crate::corpus::Special;
use crate::error::{contract, Error, Result};
use crate::tensor::{Element, Graph, ParamId, ParamStore, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransformerConfig {
    pub d_model: usize,
    pub heads: usize,
    pub ffn: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    /// Decoder width; a learned bridge maps encoder outputs when it differs.
    pub dec_d_model: usize,
    pub dec_heads: usize,
    pub dec_ffn: usize,
    pub dropout: f64,
    /// Encoder positions including `[CLS]` and `[SEP]`.
    pub max_len: usize,
    pub max_tgt_len: usize,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        Self {
            d_model: 256,
            heads: 4,
            ffn: 1024,
            enc_layers: 4,
            dec_layers: 4,
            dec_d_model: 256,
            dec_heads: 4,
            dec_ffn: 1024,
            dropout: 0.1,
            max_len: 64,
            max_tgt_len: 50,
        }
    }
}

impl TransformerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return Err(contract(format!("{} heads do not divide width {}", self.heads, self.d_model)));
        }
        if self.dec_heads == 0 || !self.dec_d_model.is_multiple_of(self.dec_heads) {
            return Err(contract(format!(
                "{} heads do not divide decoder width {}",
                self.dec_heads, self.dec_d_model
            )));
        }
        if self.max_len < 3 {
            return Err(contract("encoder max_len must leave room for [CLS] and [SEP]"));
        }
        Ok(())
    }
}

type Linear = (ParamId, ParamId);

#[derive(Clone, Debug)]
pub struct AttentionParams {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    heads: usize,
}

#[derive(Clone, Debug)]
pub struct LayerParams {
    self_attn: AttentionParams,
    ln1: Linear,
    cross: Option<(AttentionParams, Linear)>,
    ff1: Linear,
    ff2: Linear,
    ln2: Linear,
    dropout: f64,
}

fn add_linear<T: Element>(store: &mut ParamStore<T>, name: &str, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Linear {
    let w = store.add_xavier(format!("{name}.w"), fan_in, fan_out, rng);
    let b = store.add_filled(format!("{name}.b"), &[fan_out], 0.0);
    (w, b)
}

fn add_norm<T: Element>(store: &mut ParamStore<T>, name: &str, d: usize) -> Linear {
    (
        store.add_filled(format!("{name}.gain"), &[d], 1.0),
        store.add_filled(format!("{name}.bias"), &[d], 0.0),
    )
}

fn linear<T: Element>(g: &mut Graph<T>, store: &ParamStore<T>, x: Var, (w, b): Linear) -> Result<Var> {
    let w = g.param(store, w);
    let b = g.param(store, b);
    let y = g.matmul(x, w)?;
    g.add(y, b)
}

fn norm<T: Element>(g: &mut Graph<T>, store: &ParamStore<T>, x: Var, (gain, bias): Linear) -> Result<Var> {
    let gain = g.param(store, gain);
    let bias = g.param(store, bias);
    g.layer_norm(x, gain, bias)
}

impl AttentionParams {
    fn new<T: Element>(store: &mut ParamStore<T>, name: &str, d: usize, heads: usize, rng: &mut impl Rng) -> Self {
        Self {
            q: add_linear(store, &format!("{name}.q"), d, d, rng),
            k: add_linear(store, &format!("{name}.k"), d, d, rng),
            v: add_linear(store, &format!("{name}.v"), d, d, rng),
            o: add_linear(store, &format!("{name}.o"), d, d, rng),
            heads,
        }
    }

    /// Output projection, exposed for tests that silence a sublayer.
    pub fn output(&self) -> Linear {
        self.o
    }
}

fn split_heads<T: Element>(g: &mut Graph<T>, x: Var, heads: usize) -> Result<Var> {
    let s = g.shape(x).to_vec();
    let (b, l, d) = (s[0], s[1], s[2]);
    let r = g.reshape(x, &[b, l, heads, d / heads])?;
    g.permute(r, &[0, 2, 1, 3])
}

fn merge_heads<T: Element>(g: &mut Graph<T>, x: Var) -> Result<Var> {
    let s = g.shape(x).to_vec();
    let (b, h, l, dk) = (s[0], s[1], s[2], s[3]);
    let p = g.permute(x, &[0, 2, 1, 3])?;
    g.reshape(p, &[b, l, h * dk])
}

/// Multi-head scaled dot-product attention.
///
/// `query: [B, Lq, d]`, `memory: [B, Lk, d]`, `bias` broadcasts to
/// `[B, heads, Lq, Lk]`. Returns the output and the attention weights.
pub fn multi_head_attention<T: Element>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    p: &AttentionParams,
    query: Var,
    memory: Var,
    bias: Var,
    dropout: f64,
) -> Result<(Var, Var)> {
    let d = g.shape(query)[2];
    let dk = d / p.heads;
    let q = linear(g, store, query, p.q)?;
    let k = linear(g, store, memory, p.k)?;
    let v = linear(g, store, memory, p.v)?;
    let q = split_heads(g, q, p.heads)?;
    let q = g.scale(q, 1.0 / (dk as f64).sqrt());
    let k = split_heads(g, k, p.heads)?;
    let v = split_heads(g, v, p.heads)?;
    let scores = g.matmul_t(q, k, false, true)?;
    let scores = g.add(scores, bias)?;
    let weights = g.softmax(scores)?;
    let dropped = g.dropout(weights, dropout);
    let ctx = g.matmul(dropped, v)?;
    let merged = merge_heads(g, ctx)?;
    Ok((linear(g, store, merged, p.o)?, weights))
}

impl LayerParams {
    fn new<T: Element>(
        store: &mut ParamStore<T>,
        name: &str,
        d: usize,
        heads: usize,
        ffn: usize,
        cross: bool,
        dropout: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let self_attn = AttentionParams::new(store, &format!("{name}.self"), d, heads, rng);
        let ln1 = add_norm(store, &format!("{name}.ln1"), d);
        let cross = cross.then(|| {
            (
                AttentionParams::new(store, &format!("{name}.cross"), d, heads, rng),
                add_norm(store, &format!("{name}.ln_cross"), d),
            )
        });
        Self {
            self_attn,
            ln1,
            cross,
            ff1: add_linear(store, &format!("{name}.ff1"), d, ffn, rng),
            ff2: add_linear(store, &format!("{name}.ff2"), ffn, d, rng),
            ln2: add_norm(store, &format!("{name}.ln2"), d),
            dropout,
        }
    }

    pub fn self_attention(&self) -> &AttentionParams {
        &self.self_attn
    }

    pub fn ffn_output(&self) -> Linear {
        self.ff2
    }
}

/// One post-norm layer. `memory` and `memory_bias` drive cross-attention in
/// decoder layers.
pub fn transformer_layer<T: Element>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    p: &LayerParams,
    h: Var,
    bias: Var,
    memory: Option<(Var, Var)>,
) -> Result<Var> {
    let width = store.get(p.ln1.0).len();
    let shape = g.shape(h).to_vec();
    if shape.len() != 3 || shape[2] != width {
        return Err(contract(format!("layer of width {width} applied to input of shape {shape:?}")));
    }
    let (a, _) = multi_head_attention(g, store, &p.self_attn, h, h, bias, p.dropout)?;
    let a = g.dropout(a, p.dropout);
    let r = g.add(h, a)?;
    let mut h = norm(g, store, r, p.ln1)?;
    if let Some((cross, ln)) = &p.cross {
        let (mem, mem_bias) = memory.ok_or_else(|| contract("decoder layer needs encoder memory"))?;
        let (a, _) = multi_head_attention(g, store, cross, h, mem, mem_bias, p.dropout)?;
        let a = g.dropout(a, p.dropout);
        let r = g.add(h, a)?;
        h = norm(g, store, r, *ln)?;
    }
    let f = linear(g, store, h, p.ff1)?;
    let f = g.relu(f);
    let f = linear(g, store, f, p.ff2)?;
    let f = g.dropout(f, p.dropout);
    let r = g.add(h, f)?;
    norm(g, store, r, p.ln2)
}

/// Embedded encoder input.
#[derive(Clone, Debug)]
pub struct InputRepresentation {
    /// Ids with `[CLS]`/`[SEP]`, padded: `B × L`.
    pub ids: Vec<usize>,
    pub width: usize,
    pub lens: Vec<usize>,
    /// `[B, L, d]`
    pub x: Var,
    /// Key-padding bias, `[B, 1, 1, L]`.
    pub bias: Var,
    /// Rows whose content was cut to fit `max_len`.
    pub truncated: usize,
}

#[derive(Clone, Debug)]
pub struct TransformerEncoder {
    pub cfg: TransformerConfig,
    pub vocab_size: usize,
    tok: ParamId,
    pos: ParamId,
    seg: ParamId,
    layers: Vec<LayerParams>,
}

impl TransformerEncoder {
    pub fn new<T: Element>(cfg: &TransformerConfig, vocab_size: usize, store: &mut ParamStore<T>, rng: &mut impl Rng) -> Self {
        let d = cfg.d_model;
        let tok = store.add_uniform("enc.tok", &[vocab_size, d], 0.05, rng);
        let pos = store.add_uniform("enc.pos", &[cfg.max_len, d], 0.05, rng);
        let seg = store.add_uniform("enc.seg", &[2, d], 0.05, rng);
        let layers = (0..cfg.enc_layers)
            .map(|i| LayerParams::new(store, &format!("enc.layer{i}"), d, cfg.heads, cfg.ffn, false, cfg.dropout, rng))
            .collect();
        Self {
            cfg: cfg.clone(),
            vocab_size,
            tok,
            pos,
            seg,
            layers,
        }
    }

    pub fn token_table(&self) -> ParamId {
        self.tok
    }

    pub fn segment_table(&self) -> ParamId {
        self.seg
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    /// Wrap each title in `[CLS] .. [SEP]` (truncating content to fit) and pad.
    pub fn wrap(&self, src: &[&[usize]]) -> (Vec<Vec<usize>>, usize) {
        let room = self.cfg.max_len - 2;
        let mut truncated = 0;
        let rows = src
            .iter()
            .map(|s| {
                if s.len() > room {
                    truncated += 1;
                }
                let mut r = Vec::with_capacity(s.len().min(room) + 2);
                r.push(Special::Cls.id());
                r.extend_from_slice(&s[..s.len().min(room)]);
                r.push(Special::Sep.id());
                r
            })
            .collect();
        (rows, truncated)
    }

    /// `E_token + E_pos + E_A` for already-wrapped rows.
    pub fn embed_wrapped<T: Element>(&self, g: &mut Graph<T>, store: &ParamStore<T>, rows: &[Vec<usize>]) -> Result<InputRepresentation> {
        let refs: Vec<&[usize]> = rows.iter().map(Vec::as_slice).collect();
        let (ids, width, lens) = pad_batch(&refs, Special::Pad.id());
        if width > self.cfg.max_len {
            return Err(contract(format!("input length {width} exceeds {}", self.cfg.max_len)));
        }
        let b = rows.len();
        let d = self.cfg.d_model;
        let tok = g.param(store, self.tok);
        let pos = g.param(store, self.pos);
        let seg = g.param(store, self.seg);
        let te = g.rows(tok, &ids)?;
        let te = g.reshape(te, &[b, width, d])?;
        let pe = g.rows(pos, &(0..width).collect::<Vec<_>>())?;
        let se = g.rows(seg, &[0])?;
        let x = g.add(te, pe)?;
        let x = g.add(x, se)?;
        let bias = key_bias(g, &lens, width)?;
        Ok(InputRepresentation {
            ids,
            width,
            lens,
            x,
            bias,
            truncated: 0,
        })
    }

    pub fn embed_input<T: Element>(&self, g: &mut Graph<T>, store: &ParamStore<T>, src: &[&[usize]]) -> Result<InputRepresentation> {
        let (rows, truncated) = self.wrap(src);
        if truncated > 0 {
            log::info!("truncated {truncated} source title(s) to {} positions", self.cfg.max_len);
        }
        let mut rep = self.embed_wrapped(g, store, &rows)?;
        rep.truncated = truncated;
        Ok(rep)
    }

    /// Final-layer states `[B, L, d]` for an embedded input.
    pub fn forward<T: Element>(&self, g: &mut Graph<T>, store: &ParamStore<T>, rep: &InputRepresentation) -> Result<Var> {
        let mut h = g.dropout(rep.x, self.cfg.dropout);
        for layer in &self.layers {
            h = transformer_layer(g, store, layer, h, rep.bias, None)?;
        }
        Ok(h)
    }
}

fn key_bias<T: Element>(g: &mut Graph<T>, lens: &[usize], width: usize) -> Result<Var> {
    let data: Vec<f64> = lens
        .iter()
        .flat_map(|&l| (0..width).map(move |j| if j < l { 0.0 } else { MASK_BIAS }))
        .collect();
    g.constant_f64(&[lens.len(), 1, 1, width], &data)
}

fn causal_bias<T: Element>(g: &mut Graph<T>, lens: &[usize], width: usize) -> Result<Var> {
    let mut data = Vec::with_capacity(lens.len() * width * width);
    for &l in lens {
        for i in 0..width {
            for j in 0..width {
                data.push(if j <= i && j < l { 0.0 } else { MASK_BIAS });
            }
        }
    }
    g.constant_f64(&[lens.len(), 1, width, width], &data)
}

/// Masked-LM head: dense, ReLU, layer norm, then the tied token table.
#[derive(Clone, Debug)]
pub struct MlmHead {
    dense: Linear,
    ln: Linear,
    bias: ParamId,
}

impl MlmHead {
    pub fn new<T: Element>(cfg: &TransformerConfig, vocab_size: usize, store: &mut ParamStore<T>, rng: &mut impl Rng) -> Self {
        Self {
            dense: add_linear(store, "mlm.dense", cfg.d_model, cfg.d_model, rng),
            ln: add_norm(store, "mlm.ln", cfg.d_model),
            bias: store.add_filled("mlm.bias", &[vocab_size], 0.0),
        }
    }
}

/// Masked inputs and the positions that carry loss.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PretrainBatch {
    /// Wrapped rows (`[CLS] .. [SEP]`) after masking.
    pub rows: Vec<Vec<usize>>,
    /// `(row, position, original id)` for every selected position.
    pub targets: Vec<(usize, usize, usize)>,
}

/// Select each content position with probability `rate`; selected positions
/// become `[MASK]` 80% of the time, a random piece 10%, and stay 10%.
pub fn mask_batch(rows: &[Vec<usize>], vocab_size: usize, rate: f64, rng: &mut impl Rng) -> PretrainBatch {
    let mut out = rows.to_vec();
    let mut targets = Vec::new();
    let first = crate::corpus::NUM_SPECIALS;
    for (r, row) in out.iter_mut().enumerate() {
        for (p, id) in row.iter_mut().enumerate() {
            if *id < first || !rng.random_bool(rate) {
                continue;
            }
            targets.push((r, p, *id));
            let roll: f64 = rng.random();
            if roll < 0.8 {
                *id = Special::Mask.id();
            } else if roll < 0.9 {
                *id = rng.random_range(first..vocab_size);
            }
        }
    }
    PretrainBatch { rows: out, targets }
}

impl MlmHead {
    /// Mean cross-entropy over the selected positions; `None` when there are none.
    pub fn loss<T: Element>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        encoder: &TransformerEncoder,
        batch: &PretrainBatch,
    ) -> Result<Option<(Var, Var)>> {
        if batch.targets.is_empty() {
            return Ok(None);
        }
        let rep = encoder.embed_wrapped(g, store, &batch.rows)?;
        let h = encoder.forward(g, store, &rep)?;
        let d = encoder.cfg.d_model;
        let flat = g.reshape(h, &[batch.rows.len() * rep.width, d])?;
        let picks: Vec<usize> = batch.targets.iter().map(|&(r, p, _)| r * rep.width + p).collect();
        let sel = g.rows(flat, &picks)?;
        let t = linear(g, store, sel, self.dense)?;
        let t = g.relu(t);
        let t = norm(g, store, t, self.ln)?;
        let tok = g.param(store, encoder.tok);
        let logits = g.matmul_t(t, tok, false, true)?;
        let bias = g.param(store, self.bias);
        let logits = g.add(logits, bias)?;
        let dist = g.softmax(logits)?;
        let n = batch.targets.len();
        let targets: Vec<usize> = batch.targets.iter().map(|t| t.2).collect();
        let loss = g.nll_loss(dist, &targets, &vec![1.0 / n as f64; n])?;
        Ok(Some((loss, dist)))
    }
}

#[derive(Clone, Debug)]
pub struct TransformerModel {
    pub cfg: TransformerConfig,
    pub vocab_size: usize,
    pub encoder: TransformerEncoder,
    dec_tok: ParamId,
    dec_pos: ParamId,
    dec_layers: Vec<LayerParams>,
    out_bias: ParamId,
    bridge: Option<Linear>,
}

/// Teacher-forced loss averaged over target tokens.
#[derive(Clone, Copy, Debug)]
pub struct TransformerLoss {
    pub total: Var,
    pub tokens: usize,
}

impl TransformerModel {
    pub fn new<T: Element>(cfg: TransformerConfig, vocab_size: usize, store: &mut ParamStore<T>, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let encoder = TransformerEncoder::new(&cfg, vocab_size, store, rng);
        let d = cfg.dec_d_model;
        let dec_tok = store.add_uniform("dec.tok", &[vocab_size, d], 0.05, rng);
        let dec_pos = store.add_uniform("dec.pos", &[cfg.max_tgt_len + 1, d], 0.05, rng);
        let dec_layers = (0..cfg.dec_layers)
            .map(|i| LayerParams::new(store, &format!("dec.layer{i}"), d, cfg.dec_heads, cfg.dec_ffn, true, cfg.dropout, rng))
            .collect();
        let out_bias = store.add_filled("dec.out_bias", &[vocab_size], 0.0);
        let bridge = (cfg.d_model != d).then(|| add_linear(store, "dec.bridge", cfg.d_model, d, rng));
        Ok(Self {
            cfg,
            vocab_size,
            encoder,
            dec_tok,
            dec_pos,
            dec_layers,
            out_bias,
            bridge,
        })
    }

    /// Parameters of the encoder group (`enc.*`) and of everything else.
    pub fn groups<T: Element>(&self, store: &ParamStore<T>) -> (Vec<ParamId>, Vec<ParamId>) {
        store.ids().partition(|&id| store.name(id).starts_with("enc."))
    }

    /// Copy encoder token embeddings into the decoder table when widths agree.
    pub fn copy_token_embeddings<T: Element>(&self, store: &mut ParamStore<T>) {
        if self.cfg.d_model == self.cfg.dec_d_model {
            let src = store.get(self.encoder.tok).data().to_vec();
            store.get_mut(self.dec_tok).data_mut().copy_from_slice(&src);
        }
    }

    /// Encoder memory (bridged to decoder width) and its key bias.
    pub fn encode<T: Element>(&self, g: &mut Graph<T>, store: &ParamStore<T>, src: &[&[usize]]) -> Result<(Var, Var)> {
        let rep = self.encoder.embed_input(g, store, src)?;
        let mut mem = self.encoder.forward(g, store, &rep)?;
        if let Some(br) = self.bridge {
            mem = linear(g, store, mem, br)?;
        }
        Ok((mem, rep.bias))
    }

    /// Next-token distributions `[B, T, V]` for decoder inputs `tgt: B × T`.
    pub fn decode<T: Element>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        memory: Var,
        memory_bias: Var,
        tgt: &[&[usize]],
    ) -> Result<Var> {
        let (ids, width, lens) = pad_batch(tgt, Special::Pad.id());
        if width > self.cfg.max_tgt_len + 1 {
            return Err(Error::Index {
                index: width,
                len: self.cfg.max_tgt_len + 1,
            });
        }
        let b = tgt.len();
        let d = self.cfg.dec_d_model;
        let tok = g.param(store, self.dec_tok);
        let pos = g.param(store, self.dec_pos);
        let te = g.rows(tok, &ids)?;
        let te = g.reshape(te, &[b, width, d])?;
        let pe = g.rows(pos, &(0..width).collect::<Vec<_>>())?;
        let x = g.add(te, pe)?;
        let mut h = g.dropout(x, self.cfg.dropout);
        let bias = causal_bias(g, &lens, width)?;
        for layer in &self.dec_layers {
            h = transformer_layer(g, store, layer, h, bias, Some((memory, memory_bias)))?;
        }
        let logits = g.matmul_t(h, tok, false, true)?;
        let ob = g.param(store, self.out_bias);
        let logits = g.add(logits, ob)?;
        g.softmax(logits)
    }

    /// Distribution over the next target piece given a source and a prefix
    /// starting with `[BOS]`.
    pub fn encode_decode_forward<T: Element>(&self, g: &mut Graph<T>, store: &ParamStore<T>, src: &[usize], prefix: &[usize]) -> Result<Var> {
        let (mem, bias) = self.encode(g, store, &[src])?;
        let dist = self.decode(g, store, mem, bias, &[prefix])?;
        let v = self.vocab_size;
        let flat = g.reshape(dist, &[prefix.len(), v])?;
        g.rows(flat, &[prefix.len() - 1])
    }

    pub fn loss<T: Element>(&self, g: &mut Graph<T>, store: &ParamStore<T>, batch: &[&Example]) -> Result<TransformerLoss> {
        let src: Vec<&[usize]> = batch.iter().map(|e| e.src.as_slice()).collect();
        let (mem, bias) = self.encode(g, store, &src)?;
        let tgt: Vec<&[usize]> = batch.iter().map(|e| e.tgt_in.as_slice()).collect();
        let dist = self.decode(g, store, mem, bias, &tgt)?;
        let width = tgt.iter().map(|t| t.len()).max().unwrap_or(0);
        let tokens: usize = batch.iter().map(|e| e.tgt_out.len()).sum();
        let mut targets = Vec::with_capacity(batch.len() * width);
        let mut weights = Vec::with_capacity(batch.len() * width);
        for e in batch {
            for t in 0..width {
                targets.push(e.tgt_out.get(t).copied().unwrap_or(Special::Pad.id()));
                weights.push(if t < e.tgt_out.len() { 1.0 / tokens as f64 } else { 0.0 });
            }
        }
        let flat = g.reshape(dist, &[batch.len() * width, self.vocab_size])?;
        let total = g.nll_loss(flat, &targets, &weights)?;
        Ok(TransformerLoss { total, tokens })
    }

    pub fn decoder_layers(&self) -> &[LayerParams] {
        &self.dec_layers
    }
}

/// Frozen-weight decoder for one source; hypotheses carry their own prefix.
pub struct TransformerSession<'a> {
    model: &'a TransformerModel,
    store: &'a ParamStore<f32>,
    memory: Tensor<f32>,
}

impl<'a> TransformerSession<'a> {
    pub fn new(model: &'a TransformerModel, store: &'a ParamStore<f32>, src: &[usize]) -> Result<Self> {
        let mut g = Graph::new();
        let (mem, _) = model.encode(&mut g, store, &[src])?;
        Ok(Self {
            model,
            store,
            memory: g.value(mem).clone(),
        })
    }

    pub fn output_size(&self) -> usize {
        self.model.vocab_size
    }

    /// Log-probabilities of the next piece for equal-length prefixes.
    pub fn step(&self, prefixes: &[&[usize]]) -> Result<Vec<Vec<f64>>> {
        let k = prefixes.len();
        let len = prefixes[0].len();
        if prefixes.iter().any(|p| p.len() != len) {
            return Err(contract("session steps need equal-length prefixes"));
        }
        let mut g = Graph::new();
        let s = self.memory.shape().to_vec();
        let data: Vec<f32> = (0..k).flat_map(|_| self.memory.data().iter().copied()).collect();
        let mem = g.constant(Tensor::new(&[k, s[1], s[2]], data)?);
        let bias = g.constant(Tensor::zeros(&[k, 1, 1, s[1]]));
        let dist = self.model.decode(&mut g, self.store, mem, bias, prefixes)?;
        let v = self.model.vocab_size;
        let d = g.data(dist);
        Ok((0..k)
            .map(|r| {
                let off = (r * len + len - 1) * v;
                d[off..off + v].iter().map(|&p| (p as f64).max(1e-30).ln()).collect()
            })
            .collect())
    }
}

/// Most frequent piece among `ids`, the majority baseline for masked-LM accuracy.
pub fn majority_piece(ids: &[usize]) -> Option<usize> {
    let mut counts = std::collections::HashMap::new();
    for &i in ids {
        *counts.entry(i).or_insert(0usize) += 1;
    }
    counts.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))).map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> TransformerConfig {
        TransformerConfig {
            d_model: 8,
            heads: 2,
            ffn: 16,
            enc_layers: 1,
            dec_layers: 1,
            dec_d_model: 8,
            dec_heads: 2,
            dec_ffn: 16,
            dropout: 0.0,
            max_len: 10,
            max_tgt_len: 8,
        }
    }

    #[test]
    fn empty_title_is_cls_sep() {
        let mut store = ParamStore::<f64>::new();
        let enc = TransformerEncoder::new(&tiny(), 20, &mut store, &mut ChaCha8Rng::seed_from_u64(1));
        let mut g = Graph::new();
        let rep = enc.embed_input(&mut g, &store, &[&[]]).unwrap();
        assert_eq!(rep.ids, [Special::Cls.id(), Special::Sep.id()]);
        assert_eq!(g.shape(rep.x), &[1, 2, 8]);
    }

    #[test]
    fn overlong_input_is_truncated() {
        let mut store = ParamStore::<f64>::new();
        let enc = TransformerEncoder::new(&tiny(), 20, &mut store, &mut ChaCha8Rng::seed_from_u64(1));
        let mut g = Graph::new();
        let long: Vec<usize> = (7..19).collect();
        let rep = enc.embed_input(&mut g, &store, &[&long]).unwrap();
        assert_eq!(rep.width, 10);
        assert_eq!(rep.truncated, 1);
        assert_eq!(rep.ids[9], Special::Sep.id());
    }

    #[test]
    fn heads_must_divide_width() {
        let cfg = TransformerConfig { heads: 3, ..tiny() };
        let mut store = ParamStore::<f64>::new();
        assert!(TransformerModel::new(cfg, 20, &mut store, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn masking_rate_zero_selects_nothing() {
        let rows = vec![vec![4, 9, 10, 5]];
        let b = mask_batch(&rows, 20, 0.0, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(b.targets.is_empty());
        assert_eq!(b.rows, rows);
    }
}
