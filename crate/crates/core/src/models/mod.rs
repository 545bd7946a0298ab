//! Model families and the tensors they exchange with training and decoding.

pub mod recurrent;
pub mod transformer;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Special, SubwordModel, Vocabulary};
use crate::error::{config, Error, Result};

pub use recurrent::{RecurrentConfig, RecurrentModel};
pub use transformer::{TransformerConfig, TransformerModel};

/// Additive attention bias for masked positions.
pub const MASK_BIAS: f64 = -1e9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "seq2seq")]
    Seq2Seq,
    #[serde(rename = "ptrnet")]
    PtrNet,
    #[serde(rename = "ptrnet-coverage")]
    PtrNetCoverage,
    #[serde(rename = "transformer")]
    Transformer,
    #[serde(rename = "pretrained-abs")]
    PretrainedAbs,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Seq2Seq,
        Family::PtrNet,
        Family::PtrNetCoverage,
        Family::Transformer,
        Family::PretrainedAbs,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Family::Seq2Seq => "seq2seq",
            Family::PtrNet => "ptrnet",
            Family::PtrNetCoverage => "ptrnet-coverage",
            Family::Transformer => "transformer",
            Family::PretrainedAbs => "pretrained-abs",
        }
    }

    pub fn is_recurrent(self) -> bool {
        matches!(self, Family::Seq2Seq | Family::PtrNet | Family::PtrNetCoverage)
    }

    pub fn uses_pointer(self) -> bool {
        matches!(self, Family::PtrNet | Family::PtrNetCoverage)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.tag() == s)
            .ok_or_else(|| config(format!("unknown model family {s:?}")))
    }
}

/// One training or decoding example as ids.
///
/// `src_ext` and `tgt_out` use the extended vocabulary: source words missing
/// from the vocabulary get temporary ids `V + j`, in first-occurrence order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub src: Vec<usize>,
    pub src_ext: Vec<usize>,
    pub oov: Vec<String>,
    /// `[BOS] y1 .. ym`, out-of-vocabulary words as UNK.
    pub tgt_in: Vec<usize>,
    /// `y1 .. ym [EOS]`.
    pub tgt_out: Vec<usize>,
}

impl Example {
    /// Word-level example. Without `pointer`, targets outside the vocabulary are UNK.
    pub fn words<S: AsRef<str>>(
        src: &[S],
        tgt: &[S],
        vocab: &Vocabulary,
        pointer: bool,
        max_src: usize,
        max_tgt: usize,
    ) -> Self {
        let src = &src[..src.len().min(max_src)];
        let tgt = &tgt[..tgt.len().min(max_tgt.saturating_sub(1))];
        let v = vocab.len();
        let mut oov: Vec<String> = Vec::new();
        let mut src_ids = Vec::with_capacity(src.len());
        let mut src_ext = Vec::with_capacity(src.len());
        for w in src {
            let w = w.as_ref();
            match vocab.get(w) {
                Some(id) => {
                    src_ids.push(id);
                    src_ext.push(id);
                }
                None => {
                    src_ids.push(Special::Unk.id());
                    let j = oov.iter().position(|o| o == w).unwrap_or_else(|| {
                        oov.push(w.to_string());
                        oov.len() - 1
                    });
                    src_ext.push(v + j);
                }
            }
        }
        let mut tgt_in = vec![Special::Bos.id()];
        let mut tgt_out = Vec::with_capacity(tgt.len() + 1);
        for w in tgt {
            let w = w.as_ref();
            let id = vocab.id(w);
            tgt_in.push(id);
            let ext = match (vocab.get(w), pointer) {
                (Some(id), _) => id,
                (None, true) => oov
                    .iter()
                    .position(|o| o == w)
                    .map_or(Special::Unk.id(), |j| v + j),
                (None, false) => Special::Unk.id(),
            };
            tgt_out.push(ext);
        }
        tgt_out.push(Special::Eos.id());
        if !pointer {
            oov.clear();
            src_ext.clone_from(&src_ids);
        }
        Self {
            src: src_ids,
            src_ext,
            oov,
            tgt_in,
            tgt_out,
        }
    }

    /// Subword example; pieces never fall outside the vocabulary.
    pub fn pieces<S: AsRef<str>>(src: &[S], tgt: &[S], sw: &SubwordModel, max_src: usize, max_tgt: usize) -> Self {
        let mut src = sw.encode_tokens(src);
        src.truncate(max_src);
        let mut tgt = sw.encode_tokens(tgt);
        tgt.truncate(max_tgt.saturating_sub(1));
        let mut tgt_in = vec![Special::Bos.id()];
        tgt_in.extend(&tgt);
        let mut tgt_out = tgt;
        tgt_out.push(Special::Eos.id());
        Self {
            src_ext: src.clone(),
            src,
            oov: Vec::new(),
            tgt_in,
            tgt_out,
        }
    }

    /// Map output ids back to words, using this example's source-only words.
    pub fn output_words(&self, vocab: &Vocabulary, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .filter(|&&i| i != Special::Eos.id() && i != Special::Bos.id() && i != Special::Pad.id())
            .map(|&i| match vocab.token(i) {
                Some(t) => t.to_string(),
                None => self
                    .oov
                    .get(i - vocab.len())
                    .cloned()
                    .unwrap_or_else(|| Special::Unk.token().to_string()),
            })
            .collect()
    }
}

/// Pad `seqs` with `pad` to a common length; returns ids and per-row lengths.
pub fn pad_batch(seqs: &[&[usize]], pad: usize) -> (Vec<usize>, usize, Vec<usize>) {
    let width = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
    let mut ids = Vec::with_capacity(seqs.len() * width);
    for s in seqs {
        ids.extend_from_slice(s);
        ids.extend(std::iter::repeat_n(pad, width - s.len()));
    }
    (ids, width, seqs.iter().map(|s| s.len()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn family_tags_round_trip() {
        for f in Family::ALL {
            assert_eq!(f.tag().parse::<Family>().unwrap(), f);
        }
        assert!("bert".parse::<Family>().is_err());
    }

    #[test]
    fn pointer_example_uses_extended_ids() {
        let vocab = Vocabulary::from_tokens(["a", "bag", "of", "onions"]);
        let v = vocab.len();
        let ex = Example::words(
            &toks("zorblax onions zorblax bag"),
            &toks("a bag of zorblax onions"),
            &vocab,
            true,
            64,
            50,
        );
        assert_eq!(ex.oov, ["zorblax"]);
        assert_eq!(ex.src_ext[0], v);
        assert_eq!(ex.src_ext[2], v);
        assert_eq!(ex.src[0], Special::Unk.id());
        assert_eq!(ex.tgt_out[3], v);
        assert_eq!(ex.tgt_in[4], Special::Unk.id());
        assert_eq!(*ex.tgt_out.last().unwrap(), Special::Eos.id());
        assert_eq!(ex.output_words(&vocab, &ex.tgt_out), toks("a bag of zorblax onions"));

        let plain = Example::words(&toks("zorblax onions"), &toks("zorblax onions"), &vocab, false, 64, 50);
        assert_eq!(plain.tgt_out[0], Special::Unk.id());
        assert!(plain.oov.is_empty());
    }
}
