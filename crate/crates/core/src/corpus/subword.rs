//! Byte-pair style subword model with a `##` continuation marker.
//!
//! A word is split into characters, the first plain and the rest marked
//! (`z ##o ##r`), then learned merges are applied in rank order.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use super::vocab::Vocabulary;
use super::Special;
use crate::error::{config, Error, Result};
use crate::text::tokenize;

pub const CONTINUATION: &str = "##";

const HEADER: &str = "vtl-subword 1";
const BASE_ALPHABET: &str = "abcdefghijklmnopqrstuvwxyz0123456789.'&";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubwordModel {
    vocab: Vocabulary,
    merges: Vec<(String, String)>,
    ranks: HashMap<(String, String), usize>,
}

fn initial_symbols(word: &str) -> Vec<String> {
    word.chars()
        .enumerate()
        .map(|(i, c)| if i == 0 { c.to_string() } else { format!("{CONTINUATION}{c}") })
        .collect()
}

fn merged(a: &str, b: &str) -> String {
    format!("{a}{}", b.strip_prefix(CONTINUATION).unwrap_or(b))
}

impl SubwordModel {
    /// Learn merges from word frequencies until `vocab_size` pieces exist or
    /// no pair occurs twice.
    pub fn train<'a, I>(words: I, vocab_size: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
        for w in words {
            if !w.is_empty() {
                *freq.entry(w).or_default() += 1;
            }
        }
        if freq.is_empty() {
            return Err(config("cannot train a subword model on an empty corpus"));
        }
        let mut pieces: Vec<String> = Vec::new();
        let mut alphabet: Vec<char> = BASE_ALPHABET.chars().collect();
        for w in freq.keys() {
            alphabet.extend(w.chars());
        }
        alphabet.sort_unstable();
        alphabet.dedup();
        for &c in &alphabet {
            pieces.push(c.to_string());
            pieces.push(format!("{CONTINUATION}{c}"));
        }
        let mut words: Vec<(Vec<String>, usize)> = freq.iter().map(|(w, &c)| (initial_symbols(w), c)).collect();
        let mut merges = Vec::new();
        while pieces.len() + super::vocab::NUM_SPECIALS < vocab_size {
            let mut counts: HashMap<(&str, &str), usize> = HashMap::new();
            for (syms, c) in &words {
                for pair in syms.windows(2) {
                    *counts.entry((pair[0].as_str(), pair[1].as_str())).or_default() += c;
                }
            }
            let best = counts
                .into_iter()
                .max_by(|x, y| x.1.cmp(&y.1).then_with(|| y.0.cmp(&x.0)));
            let Some(((a, b), count)) = best else { break };
            if count < 2 {
                break;
            }
            let (a, b) = (a.to_string(), b.to_string());
            let m = merged(&a, &b);
            for (syms, _) in &mut words {
                apply_merge(syms, &a, &b, &m);
            }
            pieces.push(m);
            merges.push((a, b));
        }
        Ok(Self::from_parts(pieces, merges))
    }

    fn from_parts(pieces: Vec<String>, merges: Vec<(String, String)>) -> Self {
        let ranks = merges.iter().cloned().enumerate().map(|(i, p)| (p, i)).collect();
        Self {
            vocab: Vocabulary::from_tokens(pieces),
            merges,
            ranks,
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    /// Pieces for one already-normalised word.
    pub fn word_pieces(&self, word: &str) -> Vec<String> {
        let mut syms = initial_symbols(word);
        loop {
            let best = syms
                .windows(2)
                .enumerate()
                .filter_map(|(i, p)| self.ranks.get(&(p[0].clone(), p[1].clone())).map(|&r| (r, i)))
                .min();
            let Some((_, i)) = best else { break };
            let m = merged(&syms[i], &syms[i + 1]);
            syms[i] = m;
            syms.remove(i + 1);
        }
        syms
    }

    pub fn pieces(&self, text: &str) -> Vec<String> {
        tokenize(text).iter().flat_map(|w| self.word_pieces(w)).collect()
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        self.encode_tokens(&tokenize(text))
    }

    pub fn encode_tokens<S: AsRef<str>>(&self, words: &[S]) -> Vec<usize> {
        words
            .iter()
            .flat_map(|w| self.word_pieces(w.as_ref()))
            .map(|p| self.vocab.id(&p))
            .collect()
    }

    /// Join pieces back into words; specials other than UNK are dropped.
    pub fn decode(&self, ids: &[usize]) -> String {
        self.decode_words(ids).join(" ")
    }

    pub fn decode_words(&self, ids: &[usize]) -> Vec<String> {
        let mut words: Vec<String> = Vec::new();
        for &id in ids {
            if id < super::vocab::NUM_SPECIALS && id != Special::Unk.id() {
                continue;
            }
            let piece = self.vocab.token(id).unwrap_or(Special::Unk.token());
            match piece.strip_prefix(CONTINUATION) {
                Some(rest) if !words.is_empty() => words.last_mut().unwrap().push_str(rest),
                Some(rest) => words.push(rest.to_string()),
                None => words.push(piece.to_string()),
            }
        }
        words
    }

    /// True when `id` continues the previous word.
    pub fn is_continuation(&self, id: usize) -> bool {
        self.vocab.token(id).is_some_and(|t| t.starts_with(CONTINUATION) && t.len() > CONTINUATION.len())
    }

    /// Versioned text form: header, piece list, then merges in order.
    pub fn to_text(&self) -> String {
        let pieces = &self.vocab.tokens()[super::vocab::NUM_SPECIALS..];
        let mut out = format!("{HEADER}\npieces {}\n", pieces.len());
        for p in pieces {
            out.push_str(p);
            out.push('\n');
        }
        out.push_str(&format!("merges {}\n", self.merges.len()));
        for (a, b) in &self.merges {
            out.push_str(&format!("{a} {b}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |what: &str| Error::Data(what.to_string());
        let mut lines = text.lines();
        if lines.next() != Some(HEADER) {
            return Err(bad("not a subword model file"));
        }
        let count = |line: Option<&str>, key: &str| -> Result<usize> {
            line.and_then(|l| l.strip_prefix(key))
                .and_then(|n| n.trim().parse().ok())
                .ok_or_else(|| bad(&format!("missing {key}count")))
        };
        let n = count(lines.next(), "pieces ")?;
        let pieces: Vec<String> = lines.by_ref().take(n).map(String::from).collect();
        let m = count(lines.next(), "merges ")?;
        let merges = lines
            .take(m)
            .map(|l| {
                l.split_once(' ')
                    .map(|(a, b)| (a.to_string(), b.to_string()))
                    .ok_or_else(|| bad("malformed merge"))
            })
            .collect::<Result<Vec<_>>>()?;
        if pieces.len() != n || merges.len() != m {
            return Err(bad("truncated"));
        }
        Ok(Self::from_parts(pieces, merges))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }
}

fn apply_merge(syms: &mut Vec<String>, a: &str, b: &str, m: &str) {
    let mut i = 0;
    while i + 1 < syms.len() {
        if syms[i] == a && syms[i + 1] == b {
            syms[i] = m.to_string();
            syms.remove(i + 1);
        }
        i += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> SubwordModel {
        let text = "a 20.5 ounce box of lucky charms gluten free cereal ".repeat(20)
            + &"a 2 pound bag of white onions ".repeat(10);
        let words = tokenize(&text);
        SubwordModel::train(words.iter().map(String::as_str), 400).unwrap()
    }

    #[test]
    fn frequent_word_is_one_piece() {
        let m = model();
        assert_eq!(m.word_pieces("cereal"), ["cereal"]);
        assert_eq!(m.encode("cereal").len(), 1);
    }

    #[test]
    fn novel_word_round_trips_without_unk() {
        let m = model();
        let ids = m.encode("zorblax");
        assert!(ids.len() > 1);
        assert!(!ids.contains(&Special::Unk.id()));
        assert_eq!(m.decode(&ids), "zorblax");
        assert!(m.encode("").is_empty());
    }

    #[test]
    fn file_round_trip() {
        let m = model();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sw.txt");
        m.save(&p).unwrap();
        assert_eq!(SubwordModel::load(&p).unwrap(), m);
    }
}
