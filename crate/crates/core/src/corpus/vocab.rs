use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use super::TitlePair;
use crate::error::{config, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(usize)]
pub enum Special {
    Pad = 0,
    Unk = 1,
    Bos = 2,
    Eos = 3,
    Cls = 4,
    Sep = 5,
    Mask = 6,
}

impl Special {
    pub const ALL: [Special; 7] = [
        Special::Pad,
        Special::Unk,
        Special::Bos,
        Special::Eos,
        Special::Cls,
        Special::Sep,
        Special::Mask,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn token(self) -> &'static str {
        match self {
            Special::Pad => "[PAD]",
            Special::Unk => "[UNK]",
            Special::Bos => "[BOS]",
            Special::Eos => "[EOS]",
            Special::Cls => "[CLS]",
            Special::Sep => "[SEP]",
            Special::Mask => "[MASK]",
        }
    }
}

pub const NUM_SPECIALS: usize = Special::ALL.len();

const HEADER: &str = "vtl-vocab 1";

/// Token ↔ id table with the special tokens at fixed ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Specials followed by `tokens` in the given order. Duplicates are dropped.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Self {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for s in Special::ALL {
            v.push(s.token().to_string());
        }
        for t in tokens {
            v.push(t.into());
        }
        v
    }

    fn push(&mut self, t: String) {
        if !self.index.contains_key(&t) {
            self.index.insert(t.clone(), self.tokens.len());
            self.tokens.push(t);
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Id of `token`, UNK when absent.
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(Special::Unk.id())
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Result<Vec<String>> {
        ids.iter()
            .map(|&i| {
                self.token(i)
                    .map(String::from)
                    .ok_or(Error::Index { index: i, len: self.len() })
            })
            .collect()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Versioned text form: a header line, then one non-special token per line.
    pub fn to_text(&self) -> String {
        let mut out = String::from(HEADER);
        out.push('\n');
        for t in &self.tokens[NUM_SPECIALS..] {
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(HEADER) {
            return Err(Error::Data("not a vocabulary file".into()));
        }
        Ok(Self::from_tokens(lines.filter(|l| !l.is_empty())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }
}

/// Vocabulary of tokens seen at least `min_freq` times, most frequent first.
pub fn vocab_from_sequences<'a, I>(seqs: I, min_freq: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a [String]>,
{
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for seq in seqs {
        for t in seq {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    if counts.is_empty() {
        return Err(config("cannot build a vocabulary from an empty corpus"));
    }
    let mut kept: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c >= min_freq.max(1)).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    Ok(Vocabulary::from_tokens(kept.into_iter().map(|(t, _)| t)))
}

/// Shared source/target vocabulary over the (augmented) web and voice tokens.
pub fn build_vocab(pairs: &[TitlePair], min_freq: usize) -> Result<Vocabulary> {
    let seqs: Vec<Vec<String>> = pairs
        .iter()
        .flat_map(|p| [p.source_tokens(), p.voice_tokens()])
        .collect();
    vocab_from_sequences(seqs.iter().map(Vec::as_slice), min_freq)
}
