use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use vtl::corpus::GeneratorConfig;
use vtl::harness::{self, RunConfig, RunLedger};
use vtl::models::Family;
use vtl::tensor::Checkpoint;
use vtl::{Error, Result};

/// Train and evaluate models that rewrite web product titles as voice titles.
///
/// Log verbosity follows the VTL_LOG environment variable (default "info").
#[derive(Parser, Debug)]
#[command(name = "vtl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic corpus and its train/val/test split.
    Generate(GenerateArgs),
    /// Masked-LM pretraining of the transformer encoder.
    Pretrain(RunArgs),
    /// Train one model family with periodic checkpoints.
    Train(TrainArgs),
    /// Beam-search decode a split with a checkpoint.
    Decode(DecodeArgs),
    /// Score decode files and print the results table.
    Evaluate(EvaluateArgs),
    /// Print previously written reports side by side.
    Compare(CompareArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Generator settings (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for train/val/test.jsonl.
    #[arg(long, default_value = "data/corpus")]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    Desk,
    Full,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Run configuration (TOML); flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    interval: Option<u64>,
    /// Run directory; defaults to <runs>/<timestamp>-seed<seed>.
    #[arg(long)]
    run_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Pretrained encoder checkpoint (pretrained-abs).
    #[arg(long)]
    encoder: Option<PathBuf>,
    #[arg(long)]
    coverage_steps: Option<u64>,
    /// Continue from a checkpoint of an earlier run in the same run directory.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    /// Run configuration; defaults to the snapshot stored in the checkpoint.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Split to decode; defaults to test.jsonl of the configured corpus.
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    beam: Option<usize>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Decode files, one table row each.
    #[arg(required = true)]
    decodes: Vec<PathBuf>,
    #[arg(long, default_value = "reports")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[arg(required = true)]
    reports: Vec<PathBuf>,
}

fn resolve(args: &RunArgs, default_family: Option<Family>) -> Result<RunConfig> {
    let family = args.family.as_deref().map(str::parse::<Family>).transpose()?;
    let mut cfg = match (&args.config, family.or(default_family)) {
        (Some(path), _) => RunConfig::from_file(path)?,
        (None, Some(f)) => RunConfig::desk(f),
        (None, None) => return Err(Error::Config("give --config or --family".into())),
    };
    if let Some(f) = family {
        cfg.family = f;
    }
    if let Some(Preset::Full) = args.preset {
        let paths = cfg.paths.clone();
        let seed = cfg.seed;
        cfg = RunConfig::full(cfg.family);
        cfg.paths = paths;
        cfg.seed = seed;
    }
    if let Some(p) = &args.corpus {
        cfg.paths.corpus = p.clone();
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(s) = args.steps {
        cfg.training.total_steps = s;
        cfg.pretrain.steps = s;
    }
    if let Some(b) = args.batch {
        cfg.training.batch_size = b;
        cfg.pretrain.batch_size = b;
    }
    if let Some(i) = args.interval {
        cfg.training.checkpoint_interval = i;
        cfg.pretrain.checkpoint_interval = i;
    }
    Ok(cfg)
}

fn run_dir(args: &RunArgs, cfg: &RunConfig) -> PathBuf {
    args.run_dir
        .clone()
        .unwrap_or_else(|| harness::new_run_dir(&cfg.paths.runs, cfg.seed))
}

fn generate(a: GenerateArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => GeneratorConfig::from_file(p)?,
        None => GeneratorConfig::default(),
    };
    if let Some(s) = a.size {
        cfg.size = s;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let s = harness::cmd_generate(&cfg, &a.out)?;
    println!("wrote {} / {} / {} pairs to {}", s.train, s.val, s.test, a.out.display());
    println!(
        "mean tokens: web {:.2}, voice {:.2}; novel voice tokens {:.2}",
        s.stats.mean_web_len, s.stats.mean_voice_len, s.stats.mean_novel_voice
    );
    Ok(())
}

fn pretrain(a: RunArgs) -> Result<()> {
    let cfg = resolve(&a, Some(Family::PretrainedAbs))?;
    let dir = run_dir(&a, &cfg);
    let r = harness::cmd_pretrain(&cfg, &dir)?;
    println!(
        "masked-token accuracy {:.4} (majority baseline {:.4}) over {} positions",
        r.masked_accuracy, r.majority_accuracy, r.masked_positions
    );
    println!("encoder checkpoint: {}", r.encoder_checkpoint.display());
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = resolve(&a.run, None)?;
    if let Some(e) = &a.encoder {
        cfg.paths.encoder_checkpoint = Some(e.clone());
    }
    if let Some(c) = a.coverage_steps {
        cfg.training.coverage_steps = c;
    }
    let dir = match (&a.run.run_dir, &a.resume) {
        (None, Some(r)) => r
            .parent()
            .and_then(Path::parent)
            .map(Path::to_path_buf)
            .ok_or_else(|| Error::Config("cannot infer the run directory from --resume".into()))?,
        _ => run_dir(&a.run, &cfg),
    };
    let ledger: RunLedger = harness::cmd_train(&cfg, &dir, a.resume.as_deref())?;
    for c in &ledger.checkpoints {
        println!("{:<22} val {:.4} train {:.4}", c.id, c.val_loss, c.train_loss);
    }
    match ledger.best_checkpoint(&dir) {
        Some(p) => println!("best checkpoint: {}", p.display()),
        None => println!("no checkpoint written"),
    }
    Ok(())
}

fn decode(a: DecodeArgs) -> Result<()> {
    let ckpt_cfg = || -> Result<RunConfig> {
        let ckpt = Checkpoint::load(&a.checkpoint)?;
        Ok(harness::model::CheckpointMeta::from_json(&ckpt.meta)?.config)
    };
    let mut cfg = match &a.config {
        Some(p) => RunConfig::from_file(p)?,
        None => ckpt_cfg()?,
    };
    if let Some(b) = a.beam {
        let mut d = cfg.decode_config();
        d.beam_size = b;
        cfg.decode = Some(d);
    }
    let split = a.split.clone().unwrap_or_else(|| cfg.paths.corpus.join("test.jsonl"));
    let h = harness::cmd_decode(&cfg, &a.checkpoint, &split, &a.out)?;
    println!("decoded {} titles with {} to {}", h.examples, h.family, a.out.display());
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let (_, table) = harness::cmd_evaluate(&a.decodes, &a.out)?;
    print!("{table}");
    Ok(())
}

fn compare(a: CompareArgs) -> Result<()> {
    print!("{}", harness::cmd_compare(&a.reports)?);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("VTL_LOG", "info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Pretrain(a) => pretrain(a),
        Command::Train(a) => train(a),
        Command::Decode(a) => decode(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Compare(a) => compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
