use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::Codec;
use super::train::{load_split, train_subword, BatchSampler};
use super::{seeds, RunConfig};
use crate::corpus::{SubwordModel, TitlePair, NUM_SPECIALS};
use crate::error::{config, Error, Result};
use crate::models::transformer::{mask_batch, MlmHead, PretrainBatch, TransformerEncoder};
use crate::models::TransformerConfig;
use crate::tensor::{Adam, Checkpoint, Graph, ParamStore};

pub const ENCODER_FAMILY: &str = "mlm-encoder";

/// Metadata of an encoder-only checkpoint.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EncoderMeta {
    pub transformer: TransformerConfig,
    pub codec: serde_json::Value,
    pub steps: u64,
    pub seed: u64,
}

impl EncoderMeta {
    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        serde_json::from_value(v.clone()).map_err(|e| Error::Data(format!("encoder checkpoint metadata: {e}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub steps: u64,
    /// Batches without any selected position.
    pub skipped_batches: u64,
    pub losses: Vec<f64>,
    /// Top-1 accuracy on masked validation positions.
    pub masked_accuracy: f64,
    /// Accuracy of always predicting the most frequent training piece.
    pub majority_accuracy: f64,
    pub masked_positions: usize,
    pub encoder_checkpoint: PathBuf,
    pub wall_clock_secs: f64,
}

/// Wrapped `[CLS] .. [SEP]` rows for the web and voice sides of `pairs`.
pub fn pretrain_rows(encoder: &TransformerEncoder, sw: &SubwordModel, pairs: &[TitlePair]) -> Vec<Vec<usize>> {
    let seqs: Vec<Vec<usize>> = pairs
        .iter()
        .flat_map(|p| [sw.encode_tokens(&p.source_tokens()), sw.encode_tokens(&p.voice_tokens())])
        .collect();
    let refs: Vec<&[usize]> = seqs.iter().map(Vec::as_slice).collect();
    let (rows, truncated) = encoder.wrap(&refs);
    if truncated > 0 {
        log::info!("pretraining: truncated {truncated} rows to {} positions", encoder.cfg.max_len);
    }
    rows
}

/// Masked-LM pretraining of the encoder on the training split. Writes
/// `subword.txt`, `encoder.ckpt` and `pretrain.json` into `run_dir`.
pub fn cmd_pretrain(cfg: &RunConfig, run_dir: &Path) -> Result<PretrainReport> {
    cfg.validate()?;
    crate::tensor::flush_subnormals();
    let started = Instant::now();
    let train_pairs = load_split(&cfg.paths.corpus, "train")?;
    let val_pairs = load_split(&cfg.paths.corpus, "val")?;
    if train_pairs.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    std::fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
    let sw = train_subword(&train_pairs, cfg.vocab.subword_size)?;
    let codec = Codec::Pieces(sw.clone());
    let sw_path = run_dir.join(codec.file_name());
    std::fs::write(&sw_path, codec.to_text()).map_err(|e| Error::io(&sw_path, e))?;

    let p = &cfg.pretrain;
    let tcfg = cfg.transformer.clone();
    tcfg.validate().map_err(|e| config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::init(cfg.seed));
    let mut store = ParamStore::<f32>::new();
    let encoder = TransformerEncoder::new(&tcfg, sw.len(), &mut store, &mut rng);
    let head = MlmHead::new(&tcfg, sw.len(), &mut store, &mut rng);
    let mut opt = Adam::new(&store, store.ids().collect(), p.schedule);

    let rows = pretrain_rows(&encoder, &sw, &train_pairs);
    let mut sampler = BatchSampler::new(rows.len(), p.batch_size, seeds::data(cfg.seed, 0));
    let mut losses = Vec::with_capacity(p.steps as usize);
    let mut skipped = 0;
    for step in 1..=p.steps {
        let batch_rows: Vec<Vec<usize>> = sampler.indices(step).into_iter().map(|i| rows[i].clone()).collect();
        let mut mrng = ChaCha8Rng::seed_from_u64(seeds::mask(cfg.seed, step));
        let batch = mask_batch(&batch_rows, sw.len(), p.mask_rate, &mut mrng);
        let mut g = Graph::training(seeds::dropout(cfg.seed, 0, step));
        let Some((loss, _)) = head.loss(&mut g, &store, &encoder, &batch)? else {
            skipped += 1;
            log::info!("pretraining step {step}: no masked positions, skipped");
            continue;
        };
        let l = g.data(loss)[0] as f64;
        if !l.is_finite() {
            return Err(Error::Numeric(format!("non-finite masked-LM loss at step {step}")));
        }
        g.backward(loss)?;
        g.flush_grads(&mut store);
        opt.step(&mut store)?;
        losses.push(l);
        if step % p.checkpoint_interval == 0 {
            let window = &losses[losses.len().saturating_sub(p.checkpoint_interval as usize)..];
            log::info!(
                "pretraining step {step}: loss {:.4} ({:.0}s)",
                window.iter().sum::<f64>() / window.len().max(1) as f64,
                started.elapsed().as_secs_f64()
            );
        }
    }

    let val_rows = pretrain_rows(&encoder, &sw, &val_pairs);
    let (masked_accuracy, majority_accuracy, masked_positions) =
        masked_accuracy(&store, &encoder, &head, &rows, &val_rows, p.mask_rate, cfg.seed)?;

    let meta = EncoderMeta {
        transformer: tcfg,
        codec: codec.to_json(),
        steps: p.steps,
        seed: cfg.seed,
    };
    let mut ckpt = Checkpoint::from_store(ENCODER_FAMILY, serde_json::to_value(&meta).expect("meta"), &store);
    ckpt.tensors.retain(|(name, _)| name.starts_with("enc."));
    let encoder_checkpoint = run_dir.join("encoder.ckpt");
    ckpt.save(&encoder_checkpoint)?;

    let report = PretrainReport {
        steps: p.steps,
        skipped_batches: skipped,
        losses,
        masked_accuracy,
        majority_accuracy,
        masked_positions,
        encoder_checkpoint,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    let path = run_dir.join("pretrain.json");
    std::fs::write(&path, serde_json::to_string_pretty(&report).expect("report") + "\n")
        .map_err(|e| Error::io(&path, e))?;
    Ok(report)
}

/// Top-1 accuracy on masked held-out positions next to the majority-piece
/// baseline, whose piece is counted on the training rows.
pub fn masked_accuracy(
    store: &ParamStore<f32>,
    encoder: &TransformerEncoder,
    head: &MlmHead,
    train_rows: &[Vec<usize>],
    held_out: &[Vec<usize>],
    rate: f64,
    seed: u64,
) -> Result<(f64, f64, usize)> {
    let pieces: Vec<usize> = train_rows.iter().flatten().copied().filter(|&i| i >= NUM_SPECIALS).collect();
    let majority = crate::models::transformer::majority_piece(&pieces).unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::mask(seed, u64::MAX));
    let (mut hits, mut majority_hits, mut total) = (0usize, 0usize, 0usize);
    for chunk in held_out.chunks(64) {
        let batch: PretrainBatch = mask_batch(chunk, encoder.vocab_size, rate, &mut rng);
        let mut g = Graph::new();
        let Some((_, dist)) = head.loss(&mut g, store, encoder, &batch)? else { continue };
        let v = encoder.vocab_size;
        let d = g.data(dist);
        for (k, &(_, _, target)) in batch.targets.iter().enumerate() {
            let row = &d[k * v..(k + 1) * v];
            let arg = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                .map_or(0, |(i, _)| i);
            hits += usize::from(arg == target);
            majority_hits += usize::from(majority == target);
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::Data("no masked held-out positions to score".into()));
    }
    Ok((hits as f64 / total as f64, majority_hits as f64 / total as f64, total))
}
