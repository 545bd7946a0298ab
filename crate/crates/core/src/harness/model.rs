use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RunConfig;
use crate::corpus::{SubwordModel, TitlePair, Vocabulary};
use crate::decoding::{beam_search, BeamResult, DecodeConfig};
use crate::error::{config, Error, Result};
use crate::models::recurrent::RecurrentSession;
use crate::models::transformer::TransformerSession;
use crate::models::{Example, Family, RecurrentModel, TransformerModel};
use crate::tensor::{Adam, Checkpoint, Graph, ParamStore, Var};

/// Text encoding shared by a model and its checkpoints.
#[derive(Clone, Debug)]
pub enum Codec {
    Words(Vocabulary),
    Pieces(SubwordModel),
}

#[derive(Serialize, Deserialize)]
struct CodecRecord {
    kind: String,
    text: String,
}

impl Codec {
    pub fn len(&self) -> usize {
        match self {
            Codec::Words(v) => v.len(),
            Codec::Pieces(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn file_name(&self) -> &'static str {
        match self {
            Codec::Words(_) => "vocab.txt",
            Codec::Pieces(_) => "subword.txt",
        }
    }

    pub fn to_text(&self) -> String {
        match self {
            Codec::Words(v) => v.to_text(),
            Codec::Pieces(s) => s.to_text(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let kind = match self {
            Codec::Words(_) => "words",
            Codec::Pieces(_) => "pieces",
        };
        serde_json::to_value(CodecRecord {
            kind: kind.into(),
            text: self.to_text(),
        })
        .expect("codec serializes")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let rec: CodecRecord =
            serde_json::from_value(v.clone()).map_err(|e| Error::Data(format!("checkpoint codec: {e}")))?;
        match rec.kind.as_str() {
            "words" => Ok(Codec::Words(Vocabulary::from_text(&rec.text)?)),
            "pieces" => Ok(Codec::Pieces(SubwordModel::from_text(&rec.text)?)),
            k => Err(Error::Data(format!("unknown codec kind {k}"))),
        }
    }
}

/// Trainable network of one family.
#[derive(Clone, Debug)]
pub enum Net {
    Recurrent(RecurrentModel),
    Transformer(TransformerModel),
}

/// Network, weights and codec, ready to train or decode.
pub struct Model {
    pub family: Family,
    pub net: Net,
    pub store: ParamStore<f32>,
    pub codec: Codec,
}

/// Loss of one batch: the optimised objective, its NLL part and token count.
#[derive(Clone, Copy, Debug)]
pub struct BatchLoss {
    pub total: Var,
    pub nll: Var,
    pub tokens: usize,
}

impl Model {
    /// Fresh weights drawn from `init_seed`. `coverage` selects the second
    /// phase of `ptrnet-coverage`.
    pub fn build(cfg: &RunConfig, codec: Codec, coverage: bool, init_seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
        let mut store = ParamStore::new();
        let net = match (cfg.family.is_recurrent(), &codec) {
            (true, Codec::Words(v)) => Net::Recurrent(RecurrentModel::new(
                cfg.recurrent_model(coverage),
                v.len(),
                &mut store,
                &mut rng,
            )),
            (false, Codec::Pieces(s)) => {
                Net::Transformer(TransformerModel::new(cfg.transformer.clone(), s.len(), &mut store, &mut rng)?)
            }
            _ => return Err(config(format!("codec does not suit family {}", cfg.family))),
        };
        Ok(Self {
            family: cfg.family,
            net,
            store,
            codec,
        })
    }

    /// Rebuild from a training checkpoint; returns the config snapshot too.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<(Self, RunConfig)> {
        let meta = CheckpointMeta::from_json(&ckpt.meta)?;
        let codec = Codec::from_json(&meta.codec)?;
        let mut model = Self::build(&meta.config, codec, meta.phase == 2, 0)?;
        ckpt.load_into(&mut model.store, true)?;
        Ok((model, meta.config))
    }

    pub fn example(&self, pair: &TitlePair) -> Example {
        let src = pair.source_tokens();
        let tgt = pair.voice_tokens();
        match (&self.net, &self.codec) {
            (Net::Recurrent(m), Codec::Words(v)) => {
                Example::words(&src, &tgt, v, m.cfg.pointer, m.cfg.max_src_len, m.cfg.max_tgt_len)
            }
            (Net::Transformer(m), Codec::Pieces(s)) => {
                Example::pieces(&src, &tgt, s, m.cfg.max_len.saturating_sub(2), m.cfg.max_tgt_len)
            }
            _ => unreachable!("codec checked at build"),
        }
    }

    pub fn loss(&self, g: &mut Graph<f32>, batch: &[&Example], coverage: bool) -> Result<BatchLoss> {
        match &self.net {
            Net::Recurrent(m) => {
                let l = m.loss(g, &self.store, batch, coverage)?;
                Ok(BatchLoss {
                    total: l.total,
                    nll: l.nll,
                    tokens: l.tokens,
                })
            }
            Net::Transformer(m) => {
                let l = m.loss(g, &self.store, batch)?;
                Ok(BatchLoss {
                    total: l.total,
                    nll: l.total,
                    tokens: l.tokens,
                })
            }
        }
    }

    /// Optimizer groups: encoder parameters and the rest.
    pub fn optimizers(&self, cfg: &RunConfig) -> Vec<(String, Adam)> {
        let s = cfg.schedules();
        let (enc, dec): (Vec<_>, Vec<_>) = self
            .store
            .ids()
            .partition(|&id| self.store.name(id).starts_with("enc."));
        vec![
            ("encoder".to_string(), Adam::new(&self.store, enc, s.encoder)),
            ("decoder".to_string(), Adam::new(&self.store, dec, s.decoder)),
        ]
    }

    /// Beam-search one example; returns the output text and the raw result.
    pub fn decode(&self, ex: &Example, cfg: &DecodeConfig) -> Result<(String, BeamResult)> {
        if ex.src.is_empty() && matches!(self.net, Net::Recurrent(_)) {
            return Ok((
                String::new(),
                BeamResult {
                    tokens: Vec::new(),
                    logp: 0.0,
                    score: 0.0,
                    finished: false,
                },
            ));
        }
        let result = match &self.net {
            Net::Recurrent(m) => beam_search(&RecurrentSession::new(m, &self.store, ex)?, cfg)?,
            Net::Transformer(m) => beam_search(&TransformerSession::new(m, &self.store, &ex.src)?, cfg)?,
        };
        Ok((self.output_text(ex, &result.tokens), result))
    }

    pub fn output_text(&self, ex: &Example, ids: &[usize]) -> String {
        match &self.codec {
            Codec::Words(v) => ex.output_words(v, ids).join(" "),
            Codec::Pieces(s) => s.decode(ids),
        }
    }
}

/// JSON metadata stored in every training checkpoint.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub step: u64,
    pub phase: u8,
    pub train_loss: f64,
    pub config: RunConfig,
    pub codec: serde_json::Value,
}

impl CheckpointMeta {
    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        serde_json::from_value(v.clone()).map_err(|e| Error::Data(format!("checkpoint metadata: {e}")))
    }
}
