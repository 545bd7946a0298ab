//! ROUGE and duplicate counts against values precomputed by
//! `tests/data/rouge_oracle.py` (brute-force LCS, Counter clipping).

use std::path::PathBuf;

use serde_json::Value;
use vtl::metrics::{
    duplicate_unigrams, duplicate_unigrams_vs_reference, evaluate_records, lcs_len, ngram_overlap,
    read_decode_file,
};
use vtl::text::tokenize;

const FLOAT_TOL: f64 = 1e-12;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn counts(v: &Value) -> (usize, usize, usize) {
    let a = v.as_array().unwrap();
    let g = |i: usize| a[i].as_u64().unwrap() as usize;
    (g(0), g(1), g(2))
}

fn close(a: f64, b: f64, what: &str) {
    assert!((a - b).abs() <= FLOAT_TOL, "{what}: {a} vs {b}");
}

#[test]
fn fixture_matches_oracle() {
    let (records, skipped) = read_decode_file(&data("rouge_fixture.jsonl")).unwrap();
    assert_eq!(skipped, 0);
    assert_eq!(records.len(), 20);
    let expected: Value =
        serde_json::from_str(&std::fs::read_to_string(data("rouge_expected.json")).unwrap()).unwrap();
    let rows = expected["examples"].as_array().unwrap();
    let report = evaluate_records("fixture", &records, 0).unwrap();

    for (i, (rec, want)) in records.iter().zip(rows).enumerate() {
        let c = tokenize(&rec.predicted_voice);
        let r = tokenize(&rec.reference_voice);
        // The oracle splits on whitespace; the fixture is chosen so both agree.
        assert_eq!(c, rec.predicted_voice.split_whitespace().collect::<Vec<_>>(), "row {i}");
        assert_eq!(r, rec.reference_voice.split_whitespace().collect::<Vec<_>>(), "row {i}");

        assert_eq!(ngram_overlap(&c, &r, 1), counts(&want["rouge1_counts"]), "row {i} unigrams");
        assert_eq!(ngram_overlap(&c, &r, 2), counts(&want["rouge2_counts"]), "row {i} bigrams");
        assert_eq!(lcs_len(&c, &r) as u64, want["lcs"].as_u64().unwrap(), "row {i} lcs");
        assert_eq!(duplicate_unigrams(&c) as u64, want["duplicates"].as_u64().unwrap(), "row {i}");
        assert_eq!(
            duplicate_unigrams_vs_reference(&c, &r) as u64,
            want["duplicates_vs_reference"].as_u64().unwrap(),
            "row {i}"
        );

        let m = &report.per_example[i];
        for (got, key) in [(&m.rouge1, "rouge1"), (&m.rouge2, "rouge2"), (&m.rougel, "rougel")] {
            for field in ["precision", "recall", "f1"] {
                let g = match field {
                    "precision" => got.precision,
                    "recall" => got.recall,
                    _ => got.f1,
                };
                close(g, want[key][field].as_f64().unwrap(), &format!("row {i} {key}.{field}"));
            }
        }
    }

    let means = &expected["means"];
    close(report.rouge1, means["rouge1"].as_f64().unwrap(), "mean rouge1");
    close(report.rouge2, means["rouge2"].as_f64().unwrap(), "mean rouge2");
    close(report.rougel, means["rougel"].as_f64().unwrap(), "mean rougel");
    close(report.avg_duplicates, means["duplicates"].as_f64().unwrap(), "mean duplicates");
    close(
        report.avg_duplicates_vs_reference,
        means["duplicates_vs_reference"].as_f64().unwrap(),
        "mean duplicates vs reference",
    );
}

#[test]
fn empty_candidate_is_degenerate_zero() {
    let (records, _) = read_decode_file(&data("rouge_fixture.jsonl")).unwrap();
    let report = evaluate_records("fixture", &records, 0).unwrap();
    let m = &report.per_example[7];
    assert!(records[7].predicted_voice.is_empty());
    assert!(m.rouge1.degenerate && m.rouge2.degenerate && m.rougel.degenerate);
    assert_eq!(m.rouge1.f1, 0.0);
}
