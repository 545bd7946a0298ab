//! Oracles and fixtures shared by the integration tests and the acceptance
//! suite.
#![allow(dead_code)]

pub mod decode;
pub mod gradcheck;

use std::path::Path;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vtl::corpus::{GeneratorConfig, TitlePair};
use vtl::models::{RecurrentConfig, TransformerConfig};
use vtl::tensor::{Graph, ParamStore, Tensor, Var};
use vtl::Result;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared in absolute terms.
pub const FD_FLOOR: f64 = 1e-4;
/// Relative agreement expected of central differences at `h` and `h / 10`
/// on a smooth stretch, on top of roundoff.
pub const FD_AGREE: f64 = 1e-6;
/// Step sizes tried: `FD_STEP`, `FD_STEP / 10`, ...
pub const FD_STEPS: usize = 4;

/// Central difference of `f(offset)` at offset 0. A stencil that straddles a
/// kink (a ReLU crossing zero) shifts its estimate as the step shrinks, well
/// beyond the roundoff `8 ε |f| / h`. The first step whose estimate agrees
/// with the next smaller one is used, or `FD_STEP` if none does. The
/// analytic gradient plays no part.
pub fn fd_derivative(mut f: impl FnMut(f64) -> f64) -> f64 {
    let f0 = f(0.0).abs();
    let mut central = |h: f64| (f(h) - f(-h)) / (2.0 * h);
    let steps: Vec<f64> = (0..FD_STEPS).map(|k| FD_STEP / 10f64.powi(k as i32)).collect();
    let mut est = vec![central(steps[0])];
    for k in 1..FD_STEPS {
        est.push(central(steps[k]));
        let (a, b) = (est[k - 1], est[k]);
        let noise = 8.0 * f64::EPSILON * f0 / steps[k];
        if (a - b).abs() <= FD_AGREE * a.abs().max(b.abs()).max(FD_FLOOR) + noise {
            return a;
        }
    }
    est[0]
}

/// `|a − n| / max(|a|, |n|, FD_FLOOR)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
    Tensor::from_f64(shape, &data).unwrap()
}

/// Fixed projection turning any output into a scalar: `Σ out ⊙ w`.
fn project(g: &mut Graph<f64>, out: Var) -> Result<Var> {
    let shape = g.shape(out).to_vec();
    let n: usize = shape.iter().product();
    let mut rng = ChaCha8Rng::seed_from_u64(n as u64 ^ 0x5eed);
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w = g.constant_f64(&shape, &w)?;
    let p = g.mul(out, w)?;
    Ok(g.sum(p))
}

/// Largest finite-difference error over every input coordinate of `f`,
/// whose output is projected to a scalar first.
pub fn check_op<F>(inputs: &[Tensor<f64>], f: F) -> f64
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    check_op_in(inputs, Graph::new, f)
}

/// As [`check_op`] with a caller-supplied graph constructor (for dropout).
pub fn check_op_in<F, G>(inputs: &[Tensor<f64>], make: G, f: F) -> f64
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
    G: Fn() -> Graph<f64>,
{
    let eval = |values: &[Tensor<f64>]| -> f64 {
        let mut g = make();
        let vars: Vec<Var> = values.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&mut g, &vars).unwrap();
        let loss = project(&mut g, out).unwrap();
        g.data(loss)[0]
    };
    let mut g = make();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone().with_grad())).collect();
    let out = f(&mut g, &vars).unwrap();
    let loss = project(&mut g, out).unwrap();
    g.backward(loss).unwrap();
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| g.grad(v).map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec))
        .collect();
    let mut worst = 0.0f64;
    let mut values = inputs.to_vec();
    for (k, grads) in analytic.iter().enumerate() {
        for (i, &a) in grads.iter().enumerate() {
            let orig = values[k].data()[i];
            let numeric = fd_derivative(|d| {
                values[k].data_mut()[i] = orig + d;
                let v = eval(&values);
                values[k].data_mut()[i] = orig;
                v
            });
            worst = worst.max(rel_err(a, numeric));
        }
    }
    worst
}

/// Finite-difference check of a scalar loss against the parameters in
/// `store`. Up to `per_tensor` coordinates of every tensor are probed.
/// Returns the largest error and the name of the tensor it occurred in.
pub fn check_params<F>(store: &mut ParamStore<f64>, per_tensor: usize, seed: u64, make: impl Fn() -> Graph<f64>, f: F) -> (f64, String)
where
    F: Fn(&mut Graph<f64>, &ParamStore<f64>) -> Result<Var>,
{
    let mut g = make();
    let loss = f(&mut g, store).unwrap();
    g.backward(loss).unwrap();
    let ids: Vec<_> = store.ids().collect();
    let analytic: Vec<Vec<f64>> = ids
        .iter()
        .map(|&id| {
            let v = g.param(store, id);
            g.grad(v).map_or_else(|| vec![0.0; store.get(id).len()], <[f64]>::to_vec)
        })
        .collect();
    let eval = |store: &ParamStore<f64>| -> f64 {
        let mut g = make();
        let l = f(&mut g, store).unwrap();
        g.data(l)[0]
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = (0.0f64, String::new());
    for (&id, grads) in ids.iter().zip(&analytic) {
        let n = grads.len();
        let coords: Vec<usize> = if n <= per_tensor {
            (0..n).collect()
        } else {
            (0..per_tensor).map(|_| rng.random_range(0..n)).collect()
        };
        for i in coords {
            let orig = store.get(id).data()[i];
            let numeric = fd_derivative(|d| {
                store.get_mut(id).data_mut()[i] = orig + d;
                let v = eval(store);
                store.get_mut(id).data_mut()[i] = orig;
                v
            });
            let e = rel_err(grads[i], numeric);
            if e > worst.0 {
                worst = (e, format!("{}[{i}]", store.name(id)));
            }
        }
    }
    worst
}

pub fn tiny_recurrent(pointer: bool, coverage: bool) -> RecurrentConfig {
    RecurrentConfig {
        embed: 4,
        hidden: 5,
        pointer,
        coverage,
        ..RecurrentConfig::default()
    }
}

pub fn tiny_transformer(dec_width: usize) -> TransformerConfig {
    TransformerConfig {
        d_model: 8,
        heads: 2,
        ffn: 12,
        enc_layers: 1,
        dec_layers: 1,
        dec_d_model: dec_width,
        dec_heads: 2,
        dec_ffn: 12,
        dropout: 0.1,
        max_len: 12,
        max_tgt_len: 10,
    }
}

pub fn generator(size: usize, seed: u64) -> GeneratorConfig {
    GeneratorConfig {
        size,
        seed,
        ..GeneratorConfig::default()
    }
}

/// Ten distinct generated pairs.
pub fn toy_pairs() -> Vec<TitlePair> {
    vtl::corpus::generate_corpus(&generator(10, 4242)).unwrap()
}

/// Write a generated corpus of `size` pairs into `dir`.
pub fn write_corpus(dir: &Path, size: usize, seed: u64) {
    vtl::harness::cmd_generate(&generator(size, seed), dir).unwrap();
}

/// Word trigrams that occur more than once in `tokens`.
pub fn repeated_trigrams<S: AsRef<str>>(tokens: &[S]) -> usize {
    let mut seen = std::collections::HashSet::new();
    tokens.windows(3).filter(|w| !seen.insert(w.iter().map(AsRef::as_ref).collect::<Vec<&str>>())).count()
}
