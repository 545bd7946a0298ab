use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{CheckpointMeta, Codec, Model};
use super::{seeds, RunConfig};
use crate::corpus::{build_vocab, read_jsonl, SubwordModel, TitlePair};
use crate::error::{config, Error, Result};
use crate::models::{Example, Family};
use crate::tensor::{Adam, Checkpoint, Graph};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub id: String,
    pub phase: u8,
    pub step: u64,
    pub val_loss: f64,
    /// Mean training loss over the preceding interval.
    pub train_loss: f64,
    pub elapsed_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub phase: u8,
    pub step: u64,
    pub loss: f64,
}

/// Record of one training run, written as `ledger.json` in the run directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLedger {
    pub family: Family,
    pub seed: u64,
    pub config: RunConfig,
    pub codec_file: String,
    pub checkpoints: Vec<CheckpointRecord>,
    /// Best checkpoint of the first phase (coverage runs only).
    pub phase1_best: Option<String>,
    pub best: Option<String>,
    pub losses: Vec<LossPoint>,
    pub wall_clock_secs: f64,
}

impl RunLedger {
    fn new(cfg: &RunConfig, codec: &Codec) -> Self {
        Self {
            family: cfg.family,
            seed: cfg.seed,
            config: cfg.clone(),
            codec_file: codec.file_name().to_string(),
            checkpoints: Vec::new(),
            phase1_best: None,
            best: None,
            losses: Vec::new(),
            wall_clock_secs: 0.0,
        }
    }

    /// Lowest validation loss within `phase`, earliest on ties.
    pub fn select_best(&self, phase: u8) -> Option<&CheckpointRecord> {
        self.checkpoints
            .iter()
            .filter(|c| c.phase == phase)
            .fold(None, |best: Option<&CheckpointRecord>, c| match best {
                Some(b) if b.val_loss <= c.val_loss => Some(b),
                _ => Some(c),
            })
    }

    pub fn path(run_dir: &Path) -> PathBuf {
        run_dir.join("ledger.json")
    }

    pub fn save(&self, run_dir: &Path) -> Result<()> {
        let path = Self::path(run_dir);
        let text = serde_json::to_string_pretty(self).expect("ledger serializes");
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = Self::path(run_dir);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }

    pub fn checkpoint_path(&self, run_dir: &Path, id: &str) -> PathBuf {
        run_dir.join("checkpoints").join(format!("{id}.ckpt"))
    }

    pub fn best_checkpoint(&self, run_dir: &Path) -> Option<PathBuf> {
        self.best.as_deref().map(|id| self.checkpoint_path(run_dir, id))
    }
}

fn checkpoint_id(phase: u8, step: u64) -> String {
    if phase == 2 {
        format!("coverage-step-{step:06}")
    } else {
        format!("step-{step:06}")
    }
}

/// Batch `step` (1-based) of a deterministic epoch-wise shuffle.
pub struct BatchSampler {
    n: usize,
    batch: usize,
    seed: u64,
    order: Option<(u64, Vec<usize>)>,
}

impl BatchSampler {
    pub fn new(n: usize, batch: usize, seed: u64) -> Self {
        Self {
            n,
            batch,
            seed,
            order: None,
        }
    }

    fn permutation(&mut self, epoch: u64) -> &[usize] {
        if self.order.as_ref().is_none_or(|(e, _)| *e != epoch) {
            let mut idx: Vec<usize> = (0..self.n).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seeds::mix(self.seed, epoch)));
            self.order = Some((epoch, idx));
        }
        &self.order.as_ref().expect("order set").1
    }

    pub fn indices(&mut self, step: u64) -> Vec<usize> {
        let start = (step - 1) * self.batch as u64;
        let n = self.n as u64;
        (0..self.batch as u64)
            .map(|j| {
                let i = start + j;
                self.permutation(i / n)[(i % n) as usize]
            })
            .collect()
    }
}

pub(crate) fn load_split(corpus: &Path, split: &str) -> Result<Vec<TitlePair>> {
    read_jsonl(&corpus.join(format!("{split}.jsonl")))
}

/// Subword model over the source and voice words of `pairs`.
pub fn train_subword(pairs: &[TitlePair], size: usize) -> Result<SubwordModel> {
    let words: Vec<String> = pairs
        .iter()
        .flat_map(|p| {
            let mut w = p.source_tokens();
            w.extend(p.voice_tokens());
            w
        })
        .collect();
    SubwordModel::train(words.iter().map(String::as_str), size)
}

/// Mean per-token NLL over `examples`, teacher forced, dropout off.
pub fn validation_loss(model: &Model, examples: &[Example], batch: usize) -> Result<f64> {
    let mut total = 0.0;
    let mut tokens = 0usize;
    for chunk in examples.chunks(batch.max(1)) {
        let refs: Vec<&Example> = chunk.iter().collect();
        let mut g = Graph::new();
        let l = model.loss(&mut g, &refs, false)?;
        total += g.data(l.nll)[0] as f64 * l.tokens as f64;
        tokens += l.tokens;
    }
    if tokens == 0 {
        return Err(Error::Data("validation split is empty".into()));
    }
    Ok(total / tokens as f64)
}

fn usable_examples(model: &Model, pairs: &[TitlePair], what: &str) -> Vec<Example> {
    let all: Vec<Example> = pairs.iter().map(|p| model.example(p)).collect();
    let before = all.len();
    let kept: Vec<Example> = all.into_iter().filter(|e| !e.src.is_empty()).collect();
    if kept.len() < before {
        log::warn!("{what}: dropped {} examples with empty sources", before - kept.len());
    }
    kept
}

struct Phase<'a> {
    phase: u8,
    first_step: u64,
    last_step: u64,
    coverage: bool,
    train: &'a [Example],
    val: &'a [Example],
}

/// Train the configured family in `run_dir`, optionally resuming from a
/// checkpoint written by an earlier run of the same configuration.
pub fn cmd_train(cfg: &RunConfig, run_dir: &Path, resume: Option<&Path>) -> Result<RunLedger> {
    cfg.validate()?;
    cfg.check_paths()?;
    std::fs::create_dir_all(run_dir.join("checkpoints")).map_err(|e| Error::io(run_dir, e))?;
    crate::tensor::flush_subnormals();
    let started = Instant::now();
    let train_pairs = load_split(&cfg.paths.corpus, "train")?;
    let val_pairs = load_split(&cfg.paths.corpus, "val")?;
    if train_pairs.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }

    let resume_ckpt = resume.map(Checkpoint::load).transpose()?;
    let resume_meta = resume_ckpt.as_ref().map(|c| CheckpointMeta::from_json(&c.meta)).transpose()?;
    if let Some(c) = &resume_ckpt {
        if c.family != cfg.family.tag() {
            return Err(config(format!(
                "resume checkpoint is {} but the run config is {}",
                c.family,
                cfg.family.tag()
            )));
        }
    }

    let codec = match &resume_meta {
        Some(m) => Codec::from_json(&m.codec)?,
        None => make_codec(cfg, &train_pairs)?,
    };
    let codec_path = run_dir.join(codec.file_name());
    std::fs::write(&codec_path, codec.to_text()).map_err(|e| Error::io(&codec_path, e))?;
    std::fs::write(run_dir.join("config.toml"), cfg.to_toml()).map_err(|e| Error::io(run_dir, e))?;

    let mut ledger = match &resume_meta {
        Some(m) => {
            let mut l = RunLedger::load(run_dir).unwrap_or_else(|_| RunLedger::new(cfg, &codec));
            let cut = (m.phase, m.step);
            l.checkpoints.retain(|c| (c.phase, c.step) <= cut);
            l.losses.retain(|p| (p.phase, p.step) <= cut);
            l
        }
        None => RunLedger::new(cfg, &codec),
    };

    let resume_phase = resume_meta.as_ref().map_or(1, |m| m.phase);
    let mut model = Model::build(cfg, codec.clone(), resume_phase == 2, seeds::init(cfg.seed))?;
    if cfg.family == Family::PretrainedAbs && resume_ckpt.is_none() {
        load_encoder(cfg, &mut model)?;
    }
    let mut opts = model.optimizers(cfg);
    if let Some(c) = &resume_ckpt {
        c.load_into(&mut model.store, true)?;
        for (name, opt) in &mut opts {
            c.restore_optimizer(name, &model.store, opt)?;
        }
    }

    let train = usable_examples(&model, &train_pairs, "train");
    let mut val = usable_examples(&model, &val_pairs, "val");
    if let Some(cap) = cfg.training.max_val_examples {
        val.truncate(cap);
    }
    let t = &cfg.training;

    if resume_phase == 1 {
        let first = resume_meta.as_ref().map_or(1, |m| m.step + 1);
        let phase = Phase {
            phase: 1,
            first_step: first,
            last_step: t.total_steps,
            coverage: false,
            train: &train,
            val: &val,
        };
        run_phase(cfg, run_dir, &mut model, &mut opts, &mut ledger, &phase, started)?;
        let best = ledger.select_best(1).map(|c| c.id.clone());
        if cfg.family == Family::PtrNetCoverage {
            ledger.phase1_best = best;
        } else {
            ledger.best = best;
        }
        ledger.wall_clock_secs = started.elapsed().as_secs_f64();
        ledger.save(run_dir)?;
    }

    if cfg.family == Family::PtrNetCoverage {
        let first = match (&resume_meta, resume_phase) {
            (Some(m), 2) => m.step + 1,
            _ => {
                let id = ledger
                    .phase1_best
                    .clone()
                    .ok_or_else(|| Error::Data("first phase produced no checkpoint".into()))?;
                let warm = Checkpoint::load(&ledger.checkpoint_path(run_dir, &id))?;
                model = Model::build(cfg, codec.clone(), true, seeds::init(cfg.seed) ^ 2)?;
                warm.load_into(&mut model.store, false)?;
                opts = model.optimizers(cfg);
                log::info!("coverage phase warm-started from {id}");
                1
            }
        };
        let phase = Phase {
            phase: 2,
            first_step: first,
            last_step: t.coverage_steps,
            coverage: true,
            train: &train,
            val: &val,
        };
        run_phase(cfg, run_dir, &mut model, &mut opts, &mut ledger, &phase, started)?;
        ledger.best = ledger.select_best(2).map(|c| c.id.clone());
    }
    ledger.wall_clock_secs = started.elapsed().as_secs_f64();
    ledger.save(run_dir)?;
    Ok(ledger)
}

fn make_codec(cfg: &RunConfig, train: &[TitlePair]) -> Result<Codec> {
    match cfg.family {
        Family::Seq2Seq | Family::PtrNet | Family::PtrNetCoverage => {
            Ok(Codec::Words(build_vocab(train, cfg.vocab.min_freq)?))
        }
        Family::Transformer => Ok(Codec::Pieces(train_subword(train, cfg.vocab.subword_size)?)),
        Family::PretrainedAbs => {
            let path = cfg
                .paths
                .encoder_checkpoint
                .as_ref()
                .ok_or_else(|| config("pretrained-abs needs paths.encoder_checkpoint"))?;
            let ckpt = Checkpoint::load(path)?;
            let meta = super::pretrain::EncoderMeta::from_json(&ckpt.meta)?;
            Codec::from_json(&meta.codec)
        }
    }
}

/// Copy pretrained encoder tensors into `model`, and its token table into the
/// decoder's tied input/output embedding.
fn load_encoder(cfg: &RunConfig, model: &mut Model) -> Result<()> {
    let path = cfg
        .paths
        .encoder_checkpoint
        .as_ref()
        .ok_or_else(|| config("pretrained-abs needs paths.encoder_checkpoint"))?;
    let ckpt = Checkpoint::load(path)?;
    let meta = super::pretrain::EncoderMeta::from_json(&ckpt.meta)?;
    let t = &cfg.transformer;
    let e = &meta.transformer;
    if (t.d_model, t.heads, t.ffn, t.enc_layers, t.max_len) != (e.d_model, e.heads, e.ffn, e.enc_layers, e.max_len) {
        return Err(config(format!(
            "encoder checkpoint {} has width {} / {} layers but the run config asks for {} / {}",
            path.display(),
            e.d_model,
            e.enc_layers,
            t.d_model,
            t.enc_layers
        )));
    }
    let n = ckpt.load_into(&mut model.store, false)?;
    if n != ckpt.tensors.len() {
        return Err(config(format!(
            "encoder checkpoint {}: only {n} of {} tensors matched",
            path.display(),
            ckpt.tensors.len()
        )));
    }
    if let super::model::Net::Transformer(m) = &model.net {
        m.copy_token_embeddings(&mut model.store);
    }
    log::info!("loaded {n} encoder tensors from {}", path.display());
    Ok(())
}

fn run_phase(
    cfg: &RunConfig,
    run_dir: &Path,
    model: &mut Model,
    opts: &mut [(String, Adam)],
    ledger: &mut RunLedger,
    phase: &Phase<'_>,
    started: Instant,
) -> Result<()> {
    let t = &cfg.training;
    let mut sampler = BatchSampler::new(phase.train.len(), t.batch_size, seeds::data(cfg.seed, phase.phase));
    let mut window = Vec::new();
    for step in phase.first_step..=phase.last_step {
        let idx = sampler.indices(step);
        let batch: Vec<&Example> = idx.iter().map(|&i| &phase.train[i]).collect();
        let mut g = Graph::training(seeds::dropout(cfg.seed, phase.phase, step));
        let l = model.loss(&mut g, &batch, phase.coverage)?;
        let loss = g.data(l.total)[0] as f64;
        if !loss.is_finite() {
            let last = ledger.checkpoints.last().map_or("none".to_string(), |c| c.id.clone());
            ledger.save(run_dir)?;
            return Err(Error::Numeric(format!(
                "non-finite loss at step {step}; last good checkpoint: {last}"
            )));
        }
        g.backward(l.total)?;
        g.flush_grads(&mut model.store);
        for (_, opt) in opts.iter_mut() {
            opt.step(&mut model.store)?;
        }
        ledger.losses.push(LossPoint {
            phase: phase.phase,
            step,
            loss,
        });
        window.push(loss);
        if step % 50 == 0 {
            log::debug!("{} phase {} step {step} loss {loss:.4}", cfg.family, phase.phase);
        }
        if step % t.checkpoint_interval == 0 {
            let val_loss = validation_loss(model, phase.val, t.batch_size)?;
            let train_loss = window.iter().sum::<f64>() / window.len().max(1) as f64;
            window.clear();
            let id = checkpoint_id(phase.phase, step);
            let meta = CheckpointMeta {
                step,
                phase: phase.phase,
                train_loss,
                config: cfg.clone(),
                codec: model.codec.to_json(),
            };
            let meta = serde_json::to_value(&meta).expect("meta serializes");
            let mut ckpt = Checkpoint::from_store(cfg.family.tag(), meta, &model.store);
            for (name, opt) in opts.iter() {
                ckpt = ckpt.with_optimizer(name, &model.store, opt);
            }
            ckpt.save(&ledger.checkpoint_path(run_dir, &id))?;
            log::info!(
                "{} {id}: train {train_loss:.4} val {val_loss:.4} ({:.0}s)",
                cfg.family,
                started.elapsed().as_secs_f64()
            );
            ledger.checkpoints.push(CheckpointRecord {
                id,
                phase: phase.phase,
                step,
                val_loss,
                train_loss,
                elapsed_secs: started.elapsed().as_secs_f64(),
            });
            ledger.save(run_dir)?;
        }
    }
    Ok(())
}
