use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::decoding::DecodeConfig;
use crate::error::{config, Error, Result};
use crate::models::{Family, RecurrentConfig, TransformerConfig};
use crate::tensor::{LrPolicy, LrSchedule};

/// Warmups of the fine-tuning schedules at full scale.
pub const FULL_WARMUP_ENCODER: u64 = 20_000;
pub const FULL_WARMUP_DECODER: u64 = 10_000;
pub const FULL_LR_ENCODER: f64 = 2e-3;
pub const FULL_LR_DECODER: f64 = 0.2;
/// Desk-scale warmups are the full-scale ones times this factor.
pub const DESK_WARMUP_SCALE: f64 = 0.1;
/// Desk-scale encoder base rate for `pretrained-abs`. The small desk encoder
/// barely moves at the full-scale rate.
pub const DESK_LR_ENCODER: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Directory holding `train.jsonl`, `val.jsonl` and `test.jsonl`.
    pub corpus: PathBuf,
    /// Root under which run directories are created.
    pub runs: PathBuf,
    /// Pretrained encoder for `pretrained-abs`.
    pub encoder_checkpoint: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            corpus: PathBuf::from("data/corpus"),
            runs: PathBuf::from("runs"),
            encoder_checkpoint: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub total_steps: u64,
    pub checkpoint_interval: u64,
    /// Second-phase steps for `ptrnet-coverage`.
    pub coverage_steps: u64,
    /// Cap on validation examples scored per checkpoint (all when unset).
    pub max_val_examples: Option<usize>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            total_steps: 3000,
            checkpoint_interval: 200,
            coverage_steps: 600,
            max_val_examples: None,
        }
    }
}

/// Learning-rate policies of the encoder (`enc.*`) and decoder groups.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub encoder: LrPolicy,
    pub decoder: LrPolicy,
}

impl ScheduleConfig {
    pub fn for_family(family: Family, warmup_scale: f64) -> Self {
        let scaled = |w: u64| ((w as f64 * warmup_scale).round() as u64).max(1);
        let warm = |lr: f64, w: u64| LrPolicy::Warmup(LrSchedule { base_lr: lr, warmup_steps: scaled(w) });
        match family {
            Family::PretrainedAbs => Self {
                encoder: warm(FULL_LR_ENCODER, FULL_WARMUP_ENCODER),
                decoder: warm(FULL_LR_DECODER, FULL_WARMUP_DECODER),
            },
            Family::Transformer => {
                let p = warm(0.05, 8000);
                Self { encoder: p, decoder: p }
            }
            _ => {
                let p = LrPolicy::Constant { lr: 1e-3 };
                Self { encoder: p, decoder: p }
            }
        }
    }

    /// Desk defaults: warmups scaled by [`DESK_WARMUP_SCALE`]. For
    /// `pretrained-abs` the decoder base rate shrinks by the square root of
    /// the scale, which keeps its peak at the full-scale value, and the encoder
    /// uses [`DESK_LR_ENCODER`].
    pub fn desk(family: Family) -> Self {
        let mut s = Self::for_family(family, DESK_WARMUP_SCALE);
        if family == Family::PretrainedAbs {
            if let (LrPolicy::Warmup(e), LrPolicy::Warmup(d)) = (&mut s.encoder, &mut s.decoder) {
                e.base_lr = DESK_LR_ENCODER;
                d.base_lr = FULL_LR_DECODER * DESK_WARMUP_SCALE.sqrt();
            }
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocabConfig {
    pub min_freq: usize,
    pub subword_size: usize,
}

impl Default for VocabConfig {
    fn default() -> Self {
        Self {
            min_freq: 2,
            subword_size: 4000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub mask_rate: f64,
    pub checkpoint_interval: u64,
    pub schedule: LrPolicy,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 32,
            mask_rate: 0.15,
            checkpoint_interval: 500,
            schedule: LrPolicy::Warmup(LrSchedule {
                base_lr: 0.02,
                warmup_steps: 400,
            }),
        }
    }
}

/// Everything needed to reproduce one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub family: Family,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub paths: PathsConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    /// Falls back to the family preset.
    #[serde(default)]
    pub decode: Option<DecodeConfig>,
    /// Falls back to the family's desk-scale schedules.
    #[serde(default)]
    pub schedule: Option<ScheduleConfig>,
    #[serde(default)]
    pub recurrent: RecurrentConfig,
    #[serde(default)]
    pub transformer: TransformerConfig,
    #[serde(default)]
    pub vocab: VocabConfig,
    #[serde(default)]
    pub pretrain: PretrainConfig,
}

fn default_seed() -> u64 {
    7
}

impl RunConfig {
    /// Desk-scale preset: batch 32, 3,000 steps, checkpoint every 200.
    pub fn desk(family: Family) -> Self {
        Self {
            family,
            seed: default_seed(),
            paths: PathsConfig::default(),
            training: TrainingConfig::default(),
            decode: None,
            schedule: None,
            recurrent: RecurrentConfig::default(),
            transformer: TransformerConfig::default(),
            vocab: VocabConfig::default(),
            pretrain: PretrainConfig::default(),
        }
    }

    /// Full-scale preset: batch 256, 35,000 steps, checkpoint every 2,000,
    /// unscaled warmups and full-width models.
    pub fn full(family: Family) -> Self {
        let mut c = Self::desk(family);
        c.training = TrainingConfig {
            batch_size: 256,
            total_steps: 35_000,
            checkpoint_interval: 2_000,
            coverage_steps: 4_000,
            max_val_examples: None,
        };
        c.schedule = Some(ScheduleConfig::for_family(family, 1.0));
        c.recurrent.embed = 128;
        c.recurrent.hidden = 256;
        c.transformer = match family {
            Family::PretrainedAbs => TransformerConfig {
                d_model: 768,
                heads: 12,
                ffn: 3072,
                enc_layers: 12,
                dec_layers: 8,
                dec_d_model: 768,
                dec_heads: 8,
                dec_ffn: 2048,
                max_len: 512,
                ..TransformerConfig::default()
            },
            _ => TransformerConfig {
                d_model: 512,
                heads: 8,
                ffn: 2048,
                enc_layers: 6,
                dec_layers: 6,
                dec_d_model: 512,
                dec_heads: 8,
                dec_ffn: 2048,
                max_len: 512,
                ..TransformerConfig::default()
            },
        };
        c.pretrain.steps = 20_000;
        c.pretrain.batch_size = 256;
        c
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| config(format!("run config: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }

    pub fn decode_config(&self) -> DecodeConfig {
        self.decode.unwrap_or(if self.family.is_recurrent() {
            DecodeConfig::recurrent()
        } else {
            DecodeConfig::pretrained_abs()
        })
    }

    pub fn schedules(&self) -> ScheduleConfig {
        self.schedule
            .unwrap_or_else(|| ScheduleConfig::desk(self.family))
    }

    /// Recurrent model settings implied by the family.
    pub fn recurrent_model(&self, coverage: bool) -> RecurrentConfig {
        RecurrentConfig {
            pointer: self.family.uses_pointer(),
            coverage: coverage && self.family == Family::PtrNetCoverage,
            ..self.recurrent.clone()
        }
    }

    /// Structural checks that need no filesystem access.
    pub fn validate(&self) -> Result<()> {
        let t = &self.training;
        if t.batch_size == 0 || t.total_steps == 0 || t.checkpoint_interval == 0 {
            return Err(config("batch size, total steps and checkpoint interval must be positive"));
        }
        if !t.total_steps.is_multiple_of(t.checkpoint_interval) {
            return Err(config(format!(
                "checkpoint interval {} does not divide total steps {}",
                t.checkpoint_interval, t.total_steps
            )));
        }
        if self.family == Family::PtrNetCoverage
            && (t.coverage_steps == 0 || !t.coverage_steps.is_multiple_of(t.checkpoint_interval))
        {
            return Err(config(format!(
                "checkpoint interval {} does not divide coverage steps {}",
                t.checkpoint_interval, t.coverage_steps
            )));
        }
        let p = &self.pretrain;
        if p.batch_size == 0 || p.steps == 0 || p.checkpoint_interval == 0 || !p.steps.is_multiple_of(p.checkpoint_interval) {
            return Err(config("pretraining steps must be a positive multiple of its checkpoint interval"));
        }
        if !(0.0..=1.0).contains(&p.mask_rate) {
            return Err(config(format!("mask rate {} outside [0, 1]", p.mask_rate)));
        }
        self.decode_config().validate()?;
        self.transformer.validate().map_err(|e| config(e.to_string()))?;
        if self.recurrent.embed == 0 || self.recurrent.hidden == 0 {
            return Err(config("recurrent widths must be positive"));
        }
        Ok(())
    }

    /// Validation plus the files training will read.
    pub fn check_paths(&self) -> Result<()> {
        for split in ["train", "val"] {
            let p = self.paths.corpus.join(format!("{split}.jsonl"));
            if !p.is_file() {
                return Err(config(format!("corpus split {} not found", p.display())));
            }
        }
        if self.family == Family::PretrainedAbs {
            match &self.paths.encoder_checkpoint {
                Some(p) if p.is_file() => {}
                Some(p) => return Err(config(format!("encoder checkpoint {} not found", p.display()))),
                None => return Err(config("pretrained-abs needs paths.encoder_checkpoint")),
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_defaults() {
        let c = RunConfig::from_toml_str("family = \"ptrnet\"\n[training]\ntotal_steps = 100\ncheckpoint_interval = 20\n").unwrap();
        assert_eq!(c.family, Family::PtrNet);
        assert_eq!(c.training.batch_size, 32);
        assert_eq!(c.decode_config(), DecodeConfig::recurrent());
        let back = RunConfig::from_toml_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert!(RunConfig::from_toml_str("family = \"bert\"").is_err());
        assert!(RunConfig::from_toml_str("family = \"ptrnet\"\nbogus = 1").is_err());
    }

    #[test]
    fn interval_must_divide_steps() {
        let mut c = RunConfig::desk(Family::Seq2Seq);
        c.training.total_steps = 100;
        c.training.checkpoint_interval = 30;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.training.checkpoint_interval = 20;
        c.validate().unwrap();
    }

    #[test]
    fn desk_schedules_peak_at_scaled_warmups() {
        let s = RunConfig::desk(Family::PretrainedAbs).schedules();
        let (LrPolicy::Warmup(e), LrPolicy::Warmup(d)) = (s.encoder, s.decoder) else {
            panic!("warmup schedules expected")
        };
        assert_eq!((e.warmup_steps, d.warmup_steps), (2000, 1000));
        assert_eq!(e.base_lr, DESK_LR_ENCODER);
        let full_peak = FULL_LR_DECODER / (FULL_WARMUP_DECODER as f64).sqrt();
        let peak = d.lr(1000).unwrap();
        assert!((peak - full_peak).abs() <= 1e-15, "{peak}");
        let p = RunConfig::full(Family::PretrainedAbs).schedules();
        let LrPolicy::Warmup(e) = p.encoder else { panic!() };
        assert_eq!(e.warmup_steps, 20_000);
    }

    #[test]
    fn pretrained_abs_needs_encoder() {
        let dir = tempfile::tempdir().unwrap();
        for s in ["train", "val"] {
            std::fs::write(dir.path().join(format!("{s}.jsonl")), "").unwrap();
        }
        let mut c = RunConfig::desk(Family::PretrainedAbs);
        c.paths.corpus = dir.path().to_path_buf();
        assert!(matches!(c.check_paths(), Err(Error::Config(_))));
        c.paths.encoder_checkpoint = Some(dir.path().join("missing.ckpt"));
        assert!(matches!(c.check_paths(), Err(Error::Config(_))));
    }
}
