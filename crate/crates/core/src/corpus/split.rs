use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TitlePair;
use crate::error::{config, Result};

const TRAIN: usize = 13_874;
const VAL: usize = 1_926;
const TOTAL: usize = 19_269;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<TitlePair>,
    pub val: Vec<TitlePair>,
    pub test: Vec<TitlePair>,
}

/// Train / validation / test sizes for `n` pairs at 13874:1926:3469.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let round = |part: usize| ((n * part) as f64 / TOTAL as f64).round() as usize;
    let train = round(TRAIN);
    let val = round(VAL).min(n - train);
    (train, val, n - train - val)
}

/// Seeded random partition into train, validation and test.
pub fn split_corpus(pairs: &[TitlePair], seed: u64) -> Result<Split> {
    if pairs.len() < 10 {
        return Err(config(format!("need at least 10 pairs to split, got {}", pairs.len())));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train, val, _) = split_sizes(pairs.len());
    let take = |idx: &[usize]| idx.iter().map(|&i| pairs[i].clone()).collect::<Vec<_>>();
    Ok(Split {
        train: take(&order[..train]),
        val: take(&order[train..train + val]),
        test: take(&order[train + val..]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_sizes() {
        assert_eq!(split_sizes(19_269), (13_874, 1_926, 3_469));
        assert_eq!(split_sizes(100), (72, 10, 18));
    }

    #[test]
    fn too_small_is_config_error() {
        let p = TitlePair {
            web: "x".into(),
            voice: "y".into(),
            meta: Default::default(),
        };
        assert!(split_corpus(&vec![p; 9], 0).is_err());
    }
}
