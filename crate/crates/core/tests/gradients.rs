mod common;

use common::gradcheck::{family_cases, op_cases};

const SEEDS: [u64; 3] = [1, 2, 3];

#[test]
fn every_op_matches_finite_differences() {
    for seed in SEEDS {
        for (name, err) in op_cases(seed) {
            let tol = if name.starts_with("matmul") && !name.contains("softmax") { 1e-6 } else { 1e-5 };
            assert!(err < tol, "seed {seed} {name}: rel err {err:e}");
        }
    }
}

#[test]
fn every_family_matches_finite_differences() {
    for seed in SEEDS {
        for (name, err, at) in family_cases(seed) {
            assert!(err < 1e-4, "seed {seed} {name}: rel err {err:e} at {at}");
        }
    }
}
