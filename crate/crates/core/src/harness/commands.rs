use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::model::Model;
use super::RunConfig;
use crate::corpus::{generate_corpus, read_jsonl, split_corpus, write_jsonl, CorpusStats, GeneratorConfig};
use crate::decoding::DecodeConfig;
use crate::error::{config, Error, Result};
use crate::metrics::{evaluate_records, format_table, read_decode_file, read_report, write_report, DecodeRecord, EvalReport};
use crate::tensor::Checkpoint;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub stats: CorpusStats,
}

/// Generate the corpus and write `train/val/test.jsonl` and `stats.json`.
pub fn cmd_generate(cfg: &GeneratorConfig, out_dir: &Path) -> Result<GenerateSummary> {
    let pairs = generate_corpus(cfg)?;
    let split = split_corpus(&pairs, cfg.seed)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for (name, part) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
        write_jsonl(&out_dir.join(format!("{name}.jsonl")), part)?;
    }
    let stats = CorpusStats::compute(&pairs);
    for (what, got, want) in [
        ("web", stats.mean_web_len, cfg.target_web_len),
        ("voice", stats.mean_voice_len, cfg.target_voice_len),
    ] {
        if (got - want).abs() > 2.0 {
            log::warn!("mean {what} title length {got:.2} is far from the target {want:.2}");
        }
    }
    let summary = GenerateSummary {
        train: split.train.len(),
        val: split.val.len(),
        test: split.test.len(),
        stats,
    };
    let path = out_dir.join("stats.json");
    std::fs::write(&path, serde_json::to_string_pretty(&summary).expect("summary") + "\n")
        .map_err(|e| Error::io(&path, e))?;
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeHeader {
    pub family: String,
    pub checkpoint: String,
    pub decode: DecodeConfig,
    pub examples: usize,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: DecodeHeader,
}

/// Decode every pair of `split` with the checkpoint and write JSONL: a header
/// line, then one record per pair. An empty split gives an empty file.
pub fn cmd_decode(cfg: &RunConfig, checkpoint: &Path, split: &Path, out: &Path) -> Result<DecodeHeader> {
    crate::tensor::flush_subnormals();
    let ckpt = Checkpoint::load(checkpoint)?;
    if ckpt.family != cfg.family.tag() {
        return Err(config(format!(
            "checkpoint family {} does not match configured family {}",
            ckpt.family,
            cfg.family.tag()
        )));
    }
    let dcfg = cfg.decode_config();
    dcfg.validate()?;
    let pairs = read_jsonl(split)?;
    let header = DecodeHeader {
        family: ckpt.family.clone(),
        checkpoint: checkpoint
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        decode: dcfg,
        examples: pairs.len(),
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = std::fs::File::create(out).map_err(|e| Error::io(out, e))?;
    let mut w = BufWriter::new(file);
    if pairs.is_empty() {
        return Ok(header);
    }
    let (model, _) = Model::from_checkpoint(&ckpt)?;
    let line = serde_json::to_string(&HeaderLine { header: header.clone() }).expect("header");
    writeln!(w, "{line}").map_err(|e| Error::io(out, e))?;
    for (i, pair) in pairs.iter().enumerate() {
        let ex = model.example(pair);
        let (text, result) = model.decode(&ex, &dcfg)?;
        let mut flags = Vec::new();
        if !result.finished {
            flags.push("unfinished".to_string());
        }
        let rec = DecodeRecord {
            web: pair.web.clone(),
            reference_voice: pair.voice.clone(),
            predicted_voice: text,
            score: result.score,
            flags,
        };
        writeln!(w, "{}", serde_json::to_string(&rec).expect("record")).map_err(|e| Error::io(out, e))?;
        if (i + 1) % 500 == 0 {
            log::info!("decoded {} / {}", i + 1, pairs.len());
        }
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    Ok(header)
}

/// Header of a decode file, if it has one.
pub fn read_decode_header(path: &Path) -> Result<Option<DecodeHeader>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .next()
        .and_then(|l| serde_json::from_str::<HeaderLine>(l).ok())
        .map(|h| h.header))
}

/// Evaluate decode files into `reports_dir/<name>.json` plus `table.txt`.
/// Rows are named after the decoding family, or the file stem without one.
pub fn cmd_evaluate(decode_outputs: &[PathBuf], reports_dir: &Path) -> Result<(Vec<EvalReport>, String)> {
    std::fs::create_dir_all(reports_dir).map_err(|e| Error::io(reports_dir, e))?;
    let mut reports = Vec::with_capacity(decode_outputs.len());
    for path in decode_outputs {
        let name = match read_decode_header(path)? {
            Some(h) => h.family,
            None => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
        };
        let (records, skipped) = read_decode_file(path)?;
        let report = evaluate_records(&name, &records, skipped)?;
        write_report(&report, &reports_dir.join(format!("{name}.json")))?;
        reports.push(report);
    }
    let table = format_table(&reports);
    let path = reports_dir.join("table.txt");
    std::fs::write(&path, &table).map_err(|e| Error::io(&path, e))?;
    Ok((reports, table))
}

/// Side-by-side table of previously written reports, in the given order.
pub fn cmd_compare(reports: &[PathBuf]) -> Result<String> {
    if reports.is_empty() {
        return Err(config("compare needs at least one report"));
    }
    let loaded = reports.iter().map(|p| read_report(p)).collect::<Result<Vec<_>>>()?;
    Ok(format_table(&loaded))
}

/// `<runs>/<timestamp>-seed<seed>`.
pub fn new_run_dir(runs: &Path, seed: u64) -> PathBuf {
    runs.join(format!("{}-seed{seed}", chrono::Local::now().format("%Y%m%d-%H%M%S")))
}
