//! ROUGE-1/2/L F1 and duplicate-unigram counts over decoded corpora.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::text::tokenize;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when either side was empty and the score was defined as zero.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

impl RougeScore {
    fn from_counts(overlap: usize, cand: usize, reference: usize) -> Self {
        if cand == 0 || reference == 0 {
            return Self {
                degenerate: true,
                ..Self::default()
            };
        }
        let p = overlap as f64 / cand as f64;
        let r = overlap as f64 / reference as f64;
        // Equal to 2pr/(p+r) with a single rounding, so f1 <= max(p, r) holds exactly.
        let f1 = 2.0 * overlap as f64 / (cand + reference) as f64;
        Self {
            precision: p,
            recall: r,
            f1,
            degenerate: false,
        }
    }
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram overlap, candidate n-gram total and reference n-gram total.
pub fn ngram_overlap<S: AsRef<str>>(candidate: &[S], reference: &[S], n: usize) -> (usize, usize, usize) {
    let c = ngram_counts(candidate, n);
    let r = ngram_counts(reference, n);
    let overlap = c.iter().map(|(g, &k)| k.min(r.get(g).copied().unwrap_or(0))).sum();
    (overlap, c.values().sum(), r.values().sum())
}

pub fn rouge_n<S: AsRef<str>>(candidate: &[S], reference: &[S], n: usize) -> Result<RougeScore> {
    if n == 0 {
        return Err(contract("rouge_n needs n >= 1"));
    }
    let (o, c, r) = ngram_overlap(candidate, reference, n);
    Ok(RougeScore::from_counts(o, c, r))
}

/// Length of the longest common subsequence.
pub fn lcs_len<S: AsRef<str>>(a: &[S], b: &[S]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x.as_ref() == y.as_ref() {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> RougeScore {
    RougeScore::from_counts(lcs_len(candidate, reference), candidate.len(), reference.len())
}

/// `Σ max(0, count − 1)` over the candidate's distinct tokens.
pub fn duplicate_unigrams<S: AsRef<str>>(candidate: &[S]) -> usize {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in candidate {
        *counts.entry(t.as_ref()).or_insert(0) += 1;
    }
    counts.values().map(|&c| c - 1).sum()
}

/// Repeats in the candidate beyond what the reference itself contains:
/// `Σ max(0, count_cand(w) − max(count_ref(w), 1))`.
pub fn duplicate_unigrams_vs_reference<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> usize {
    let mut c: HashMap<&str, usize> = HashMap::new();
    for t in candidate {
        *c.entry(t.as_ref()).or_insert(0) += 1;
    }
    let mut r: HashMap<&str, usize> = HashMap::new();
    for t in reference {
        *r.entry(t.as_ref()).or_insert(0) += 1;
    }
    c.iter()
        .map(|(w, &k)| k.saturating_sub(r.get(w).copied().unwrap_or(0).max(1)))
        .sum()
}

/// One decoded example as stored in a decode file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeRecord {
    pub web: String,
    pub reference_voice: String,
    pub predicted_voice: String,
    #[serde(default)]
    pub score: f64,
    #[serde(default)]
    pub flags: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleMetrics {
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    pub rougel: RougeScore,
    pub duplicates: usize,
    pub duplicates_vs_reference: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub name: String,
    pub examples: usize,
    pub skipped: usize,
    pub rouge1: f64,
    pub rouge2: f64,
    pub rougel: f64,
    pub avg_duplicates: f64,
    pub avg_duplicates_vs_reference: f64,
    pub per_example: Vec<ExampleMetrics>,
}

pub fn example_metrics(candidate: &str, reference: &str) -> ExampleMetrics {
    let c = tokenize(candidate);
    let r = tokenize(reference);
    ExampleMetrics {
        rouge1: rouge_n(&c, &r, 1).expect("n = 1"),
        rouge2: rouge_n(&c, &r, 2).expect("n = 2"),
        rougel: rouge_l(&c, &r),
        duplicates: duplicate_unigrams(&c),
        duplicates_vs_reference: duplicate_unigrams_vs_reference(&c, &r),
    }
}

/// Per-example metrics and their arithmetic means.
pub fn evaluate_records(name: &str, records: &[DecodeRecord], skipped: usize) -> Result<EvalReport> {
    if records.is_empty() {
        return Err(Error::Data(format!("{name}: no decoded records to evaluate")));
    }
    let per_example: Vec<ExampleMetrics> = records
        .iter()
        .map(|r| example_metrics(&r.predicted_voice, &r.reference_voice))
        .collect();
    let n = per_example.len() as f64;
    let mean = |f: &dyn Fn(&ExampleMetrics) -> f64| per_example.iter().map(f).sum::<f64>() / n;
    Ok(EvalReport {
        name: name.to_string(),
        examples: per_example.len(),
        skipped,
        rouge1: mean(&|m| m.rouge1.f1),
        rouge2: mean(&|m| m.rouge2.f1),
        rougel: mean(&|m| m.rougel.f1),
        avg_duplicates: mean(&|m| m.duplicates as f64),
        avg_duplicates_vs_reference: mean(&|m| m.duplicates_vs_reference as f64),
        per_example,
    })
}

/// Read a decode file (an optional header object first, then one record per
/// line). Malformed lines are skipped; more than 1% skipped is an error.
pub fn read_decode_file(path: &Path) -> Result<(Vec<DecodeRecord>, usize)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut skipped = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<DecodeRecord>(line) {
            Ok(r) => records.push(r),
            Err(_) if i == 0 && line.contains("\"header\"") => {}
            Err(e) => {
                log::warn!("{}:{}: skipping malformed record: {e}", path.display(), i + 1);
                skipped += 1;
            }
        }
    }
    let total = records.len() + skipped;
    if total > 0 && skipped * 100 > total {
        return Err(Error::Data(format!(
            "{}: {skipped} of {total} records malformed",
            path.display()
        )));
    }
    Ok((records, skipped))
}

pub fn evaluate_corpus(decode_output: &Path, reports_path: &Path) -> Result<EvalReport> {
    let (records, skipped) = read_decode_file(decode_output)?;
    let name = decode_output
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let report = evaluate_records(&name, &records, skipped)?;
    write_report(&report, reports_path)?;
    Ok(report)
}

pub fn write_report(report: &EvalReport, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_report(path: &Path) -> Result<EvalReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Aligned text table, one row per report in the given order.
pub fn format_table(reports: &[EvalReport]) -> String {
    let width = reports.iter().map(|r| r.name.len()).max().unwrap_or(0).max(5);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>7}  {:>7}  {:>7}  {:>8}  {:>8}",
        "Model", "R-1", "R-2", "R-L", "avg dup", "dup/ref"
    );
    let _ = writeln!(out, "{}", "-".repeat(width + 48));
    for r in reports {
        let _ = writeln!(
            out,
            "{:<width$}  {:>7.4}  {:>7.4}  {:>7.4}  {:>8.4}  {:>8.4}",
            r.name, r.rouge1, r.rouge2, r.rougel, r.avg_duplicates, r.avg_duplicates_vs_reference
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn rouge_hand_cases() {
        let s = rouge_n(&t("a b a"), &t("a b"), 1).unwrap();
        assert!((s.precision - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.recall, 1.0);
        assert!((s.f1 - 0.8).abs() < 1e-15);
        assert_eq!(rouge_n(&t("x y"), &t("x y"), 2).unwrap().f1, 1.0);
        assert_eq!(rouge_n(&t("x y"), &t("p q"), 1).unwrap().f1, 0.0);
        assert!(rouge_n(&t(""), &t("p q"), 1).unwrap().degenerate);

        let l = rouge_l(&t("a b c d"), &t("a c d"));
        assert_eq!((l.precision, l.recall), (0.75, 1.0));
        assert_eq!(lcs_len(&t("a b c d"), &t("d c b a")), 1);
    }

    #[test]
    fn duplicate_cases() {
        assert_eq!(duplicate_unigrams(&t("a 2 pound bag")), 0);
        assert_eq!(duplicate_unigrams(&t("produce produce produce baby food blend")), 2);
        assert_eq!(duplicate_unigrams(&t("a 1.5 to 1.5 pound tray")), 1);
        assert_eq!(duplicate_unigrams_vs_reference(&t("a a a b"), &t("a a b")), 1);
    }

    #[test]
    fn single_example_means() {
        let r = DecodeRecord {
            web: "w".into(),
            reference_voice: "a 2 pound bag of white onions".into(),
            predicted_voice: "a 2 pound bag of onions".into(),
            score: 0.0,
            flags: vec![],
        };
        let rep = evaluate_records("m", std::slice::from_ref(&r), 0).unwrap();
        let m = example_metrics(&r.predicted_voice, &r.reference_voice);
        assert_eq!(rep.rouge1, m.rouge1.f1);
        assert_eq!(rep.rougel, m.rougel.f1);
        assert!(evaluate_records("m", &[], 0).is_err());
    }
}
