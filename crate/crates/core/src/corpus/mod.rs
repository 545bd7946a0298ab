//! Title pairs, tokenisation and the synthetic corpus generator.

pub mod generator;
mod split;
pub mod subword;
mod vocab;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use generator::{generate_corpus, generate_pair, GeneratorConfig, ProductRecord, Quantity, Unit};
pub use split::{split_corpus, split_sizes, Split};
pub use subword::SubwordModel;
pub use vocab::{build_vocab, vocab_from_sequences, Special, Vocabulary, NUM_SPECIALS};

use crate::error::{Error, Result};
use crate::text::tokenize;

/// Metadata attributes appended to the web title when missing from it.
pub const META_KEYS: [&str; 3] = ["brand", "container", "size"];

/// One example: a web title and its reference voice title.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TitlePair {
    pub web: String,
    pub voice: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

impl TitlePair {
    pub fn web_tokens(&self) -> Vec<String> {
        tokenize(&self.web)
    }

    pub fn voice_tokens(&self) -> Vec<String> {
        tokenize(&self.voice)
    }

    /// Model input: web tokens plus any metadata they lack.
    pub fn source_tokens(&self) -> Vec<String> {
        augment_metadata(&self.web_tokens(), &self.meta)
    }
}

/// Append brand, container and size attributes that the web tokens lack.
///
/// An attribute counts as present when its tokens occur contiguously in the
/// web tokens, so applying this twice changes nothing.
pub fn augment_metadata(web: &[String], meta: &BTreeMap<String, String>) -> Vec<String> {
    let mut out = web.to_vec();
    for key in META_KEYS {
        let Some(value) = meta.get(key) else { continue };
        let attr = tokenize(value);
        if attr.is_empty() || contains_run(&out, &attr) {
            continue;
        }
        out.extend(attr);
    }
    out
}

fn contains_run(haystack: &[String], needle: &[String]) -> bool {
    needle.len() <= haystack.len() && haystack.windows(needle.len()).any(|w| w == needle)
}

pub fn read_jsonl(path: &Path) -> Result<Vec<TitlePair>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: TitlePair = serde_json::from_str(&line).map_err(|e| {
            Error::Data(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        pairs.push(pair);
    }
    Ok(pairs)
}

pub fn write_jsonl(path: &Path, pairs: &[TitlePair]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in pairs {
        let line = serde_json::to_string(p).expect("title pair serializes");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Corpus-level length statistics in tokens.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub pairs: usize,
    pub mean_web_len: f64,
    pub mean_voice_len: f64,
    pub mean_unique_web: f64,
    pub mean_unique_voice: f64,
    /// Voice tokens that never occur in the (augmented) web title.
    pub mean_novel_voice: f64,
}

impl CorpusStats {
    pub fn compute(pairs: &[TitlePair]) -> Self {
        if pairs.is_empty() {
            return Self::default();
        }
        let n = pairs.len() as f64;
        let mut s = Self {
            pairs: pairs.len(),
            ..Self::default()
        };
        for p in pairs {
            let web = p.web_tokens();
            let voice = p.voice_tokens();
            let src = p.source_tokens();
            s.mean_web_len += web.len() as f64;
            s.mean_voice_len += voice.len() as f64;
            s.mean_unique_web += unique(&web) as f64;
            s.mean_unique_voice += unique(&voice) as f64;
            s.mean_novel_voice += voice.iter().filter(|t| !src.contains(t)).count() as f64;
        }
        s.mean_web_len /= n;
        s.mean_voice_len /= n;
        s.mean_unique_web /= n;
        s.mean_unique_voice /= n;
        s.mean_novel_voice /= n;
        s
    }
}

fn unique(tokens: &[String]) -> usize {
    tokens.iter().collect::<std::collections::BTreeSet<_>>().len()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn augment_appends_missing_brand_once() {
        let web = toks("large grade aa eggs 6 ct a carton");
        let mut meta = BTreeMap::new();
        meta.insert("brand".to_string(), "Great Value".to_string());
        meta.insert("container".to_string(), "carton".to_string());
        let once = augment_metadata(&web, &meta);
        assert_eq!(once, toks("large grade aa eggs 6 ct a carton great value"));
        assert_eq!(augment_metadata(&once, &meta), once);
        assert_eq!(augment_metadata(&web, &BTreeMap::new()), web);
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let pairs = vec![TitlePair {
            web: "White Onions 2 lbs a bag".into(),
            voice: "a 2 pound bag of white onions".into(),
            meta: BTreeMap::new(),
        }];
        write_jsonl(&path, &pairs).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "{\"web\":\"White Onions 2 lbs a bag\",\"voice\":\"a 2 pound bag of white onions\"}\n"
        );
        assert_eq!(read_jsonl(&path).unwrap(), pairs);
    }
}
