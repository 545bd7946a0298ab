//! Finite-difference suites over every differentiable operation and every
//! model family, one random seed at a time.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vtl::corpus::{Special, Vocabulary};
use vtl::models::recurrent::{coverage_loss, pointer_mixture};
use vtl::models::transformer::{mask_batch, multi_head_attention, transformer_layer, MlmHead, TransformerEncoder};
use vtl::models::{Example, RecurrentModel, TransformerModel};
use vtl::tensor::{Graph, ParamStore, Tensor};

use super::{check_op, check_op_in, check_params, random_tensor, tiny_recurrent, tiny_transformer};

/// Coordinates probed per parameter tensor in the model checks.
pub const PROBES_PER_TENSOR: usize = 6;

fn t(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    random_tensor(rng, shape, 1.0)
}

/// `(operation, worst relative error)` for every tape operation.
pub fn op_cases(seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = &mut rng;
    let mut out = Vec::new();
    out.push(("matmul", check_op(&[t(r, &[3, 4]), t(r, &[4, 2])], |g, v| g.matmul(v[0], v[1]))));
    out.push((
        "matmul batched shared",
        check_op(&[t(r, &[2, 3, 4]), t(r, &[4, 5])], |g, v| g.matmul(v[0], v[1])),
    ));
    out.push((
        "matmul batched",
        check_op(&[t(r, &[2, 3, 4]), t(r, &[2, 4, 2])], |g, v| g.matmul(v[0], v[1])),
    ));
    out.push((
        "matmul transposed",
        check_op(&[t(r, &[4, 3]), t(r, &[2, 4])], |g, v| g.matmul_t(v[0], v[1], true, true)),
    ));
    out.push((
        "matmul batched b transposed",
        check_op(&[t(r, &[2, 3, 4]), t(r, &[2, 5, 4])], |g, v| g.matmul_t(v[0], v[1], false, true)),
    ));
    out.push((
        "add broadcast",
        check_op(&[t(r, &[2, 3, 4]), t(r, &[4])], |g, v| g.add(v[0], v[1])),
    ));
    out.push((
        "add broadcast inner",
        check_op(&[t(r, &[2, 2, 3, 3]), t(r, &[2, 1, 1, 3])], |g, v| g.add(v[0], v[1])),
    ));
    out.push(("sub", check_op(&[t(r, &[3, 4]), t(r, &[3, 4])], |g, v| g.sub(v[0], v[1]))));
    out.push(("mul", check_op(&[t(r, &[3, 4]), t(r, &[3, 4])], |g, v| g.mul(v[0], v[1]))));
    out.push((
        "mul broadcast",
        check_op(&[t(r, &[3, 4]), t(r, &[3, 1])], |g, v| g.mul(v[0], v[1])),
    ));
    out.push((
        "minimum",
        check_op(&[t(r, &[3, 4]), t(r, &[3, 4])], |g, v| g.minimum(v[0], v[1])),
    ));
    out.push(("affine", check_op(&[t(r, &[3, 4])], |g, v| Ok(g.affine(v[0], -1.5, 0.25)))));
    out.push(("scale", check_op(&[t(r, &[3, 4])], |g, v| Ok(g.scale(v[0], 0.7)))));
    out.push(("tanh", check_op(&[t(r, &[3, 4])], |g, v| Ok(g.tanh(v[0])))));
    out.push(("sigmoid", check_op(&[random_tensor(r, &[3, 4], 4.0)], |g, v| Ok(g.sigmoid(v[0])))));
    out.push(("relu", check_op(&[t(r, &[3, 4])], |g, v| Ok(g.relu(v[0])))));
    let dropout_seed = r.random::<u64>();
    out.push((
        "dropout",
        check_op_in(&[t(r, &[4, 5])], || Graph::training(dropout_seed), |g, v| Ok(g.dropout(v[0], 0.3))),
    ));
    out.push(("softmax", check_op(&[random_tensor(r, &[3, 5], 3.0)], |g, v| g.softmax(v[0]))));
    out.push(("softmax 4d", check_op(&[t(r, &[2, 2, 3, 4])], |g, v| g.softmax(v[0]))));
    out.push((
        "layer_norm",
        check_op(&[t(r, &[3, 6]), t(r, &[6]), t(r, &[6])], |g, v| g.layer_norm(v[0], v[1], v[2])),
    ));
    out.push(("rows", check_op(&[t(r, &[6, 3])], |g, v| g.rows(v[0], &[0, 2, 2, 5]))));
    out.push((
        "concat",
        check_op(&[t(r, &[2, 3]), t(r, &[2, 2]), t(r, &[2, 1])], |g, v| g.concat(v)),
    ));
    out.push(("slice_last", check_op(&[t(r, &[3, 7])], |g, v| g.slice_last(v[0], 2, 3))));
    out.push(("reshape", check_op(&[t(r, &[2, 6])], |g, v| g.reshape(v[0], &[3, 4]))));
    out.push(("permute", check_op(&[t(r, &[2, 3, 4])], |g, v| g.permute(v[0], &[0, 2, 1]))));
    out.push(("permute 4d", check_op(&[t(r, &[2, 3, 2, 4])], |g, v| g.permute(v[0], &[0, 2, 1, 3]))));
    out.push(("sum", check_op(&[t(r, &[3, 4])], |g, v| Ok(g.sum(v[0])))));
    out.push(("mean", check_op(&[t(r, &[3, 4])], |g, v| Ok(g.mean(v[0])))));
    let mask: Vec<f64> = (0..12).map(|i| f64::from(i % 3 != 0)).collect();
    out.push(("mask", check_op(&[t(r, &[3, 4])], move |g, v| g.mask(v[0], mask.clone()))));
    out.push((
        "scatter_add",
        check_op(&[t(r, &[2, 6]), t(r, &[2, 4])], |g, v| g.scatter_add(v[0], v[1], &[1, 3, 1, 5, 0, 0, 2, 4])),
    ));
    out.push(("pad_last", check_op(&[t(r, &[2, 3])], |g, v| g.pad_last(v[0], 5))));
    out.push((
        "nll_loss",
        check_op(&[random_tensor(r, &[3, 5], 2.0)], |g, v| {
            let d = g.softmax(v[0])?;
            g.nll_loss(d, &[1, 4, 0], &[0.5, 0.3, 0.2])
        }),
    ));
    out.push((
        "matmul softmax nll",
        check_op(&[t(r, &[2, 4]), t(r, &[4, 6])], |g, v| {
            let z = g.matmul(v[0], v[1])?;
            let d = g.softmax(z)?;
            g.nll_loss(d, &[3, 5], &[0.5, 0.5])
        }),
    ));
    out.push((
        "shared use",
        check_op(&[t(r, &[3, 3])], |g, v| {
            let sq = g.mul(v[0], v[0])?;
            let p = g.matmul(v[0], sq)?;
            let th = g.tanh(v[0]);
            g.add(p, th)
        }),
    ));
    out.push((
        "coverage_loss",
        check_op(&[random_tensor(r, &[5], 1.0), random_tensor(r, &[5], 1.0)], |g, v| {
            let a = g.softmax(v[0])?;
            coverage_loss(g, a, v[1])
        }),
    ));
    out.push((
        "pointer_mixture",
        check_op(&[t(r, &[2, 5]), t(r, &[2, 1]), t(r, &[2, 3])], |g, v| {
            let pv = g.softmax(v[0])?;
            let pg = g.sigmoid(v[1]);
            let a = g.softmax(v[2])?;
            pointer_mixture(g, pv, pg, a, &[1, 6, 1, 0, 5, 6], 7)
        }),
    ));
    out
}

fn vocab() -> Vocabulary {
    Vocabulary::from_tokens(["a", "8", "ounce", "bag", "of", "nuts", "box"])
}

fn word_examples(pointer: bool) -> Vec<Example> {
    let v = vocab();
    let ex = |src: &str, tgt: &str| {
        let s: Vec<&str> = src.split(' ').collect();
        let t: Vec<&str> = tgt.split(' ').collect();
        Example::words(&s, &t, &v, pointer, 64, 50)
    };
    vec![
        ex("nuts zorvel 8 oz bag", "an 8 ounce bag of zorvel nuts"),
        ex("box nuts", "a box of nuts"),
    ]
}

fn piece_examples(rng: &mut ChaCha8Rng, vocab_size: usize) -> Vec<Example> {
    let first = vtl::corpus::NUM_SPECIALS;
    [(5, 4), (3, 6)]
        .into_iter()
        .map(|(ns, nt)| {
            let src: Vec<usize> = (0..ns).map(|_| rng.random_range(first..vocab_size)).collect();
            let tgt: Vec<usize> = (0..nt).map(|_| rng.random_range(first..vocab_size)).collect();
            let mut tgt_in = vec![Special::Bos.id()];
            tgt_in.extend(&tgt);
            let mut tgt_out = tgt;
            tgt_out.push(Special::Eos.id());
            Example {
                src_ext: src.clone(),
                src,
                oov: Vec::new(),
                tgt_in,
                tgt_out,
            }
        })
        .collect()
}

/// `(check, worst relative error, where)` for every model family plus the
/// attention, layer and masked-LM building blocks.
pub fn family_cases(seed: u64) -> Vec<(&'static str, f64, String)> {
    let mut out = Vec::new();
    let v = vocab().len();
    let dropout_seed = seed ^ 0xd0;

    for (name, pointer, coverage) in [
        ("seq2seq", false, false),
        ("ptrnet", true, false),
        ("ptrnet-coverage", true, true),
    ] {
        let mut store = ParamStore::<f64>::new();
        let m = RecurrentModel::new(tiny_recurrent(pointer, coverage), v, &mut store, &mut ChaCha8Rng::seed_from_u64(seed));
        let exs = word_examples(pointer);
        let (err, at) = check_params(&mut store, PROBES_PER_TENSOR, seed, Graph::new, |g, s| {
            let batch: Vec<&Example> = exs.iter().collect();
            Ok(m.loss(g, s, &batch, coverage)?.total)
        });
        out.push((name, err, at));
    }

    {
        let mut store = ParamStore::<f64>::new();
        let m = RecurrentModel::new(tiny_recurrent(false, true), v, &mut store, &mut ChaCha8Rng::seed_from_u64(seed));
        let (err, at) = check_params(&mut store, PROBES_PER_TENSOR, seed, Graph::new, |g, s| {
            let enc = m.encode(g, s, &[&[7, 8, 9], &[10, 11]])?;
            let (h, _) = m.initial_state(g, s, &enc)?;
            let cov = g.constant_f64(&[2, 3], &[0.1, 0.5, 0.2, 0.3, 0.0, 0.0])?;
            let a = m.attend(g, s, &enc, h, Some(cov))?;
            let ctx = g.tanh(a.context);
            let w = g.mul(a.weights, a.weights)?;
            let x = g.sum(ctx);
            let y = g.sum(w);
            g.add(x, y)
        });
        out.push(("attend", err, at));
    }

    for (name, dec_width) in [("transformer", 8), ("pretrained-abs", 12)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::<f64>::new();
        let m = TransformerModel::new(tiny_transformer(dec_width), 20, &mut store, &mut rng).unwrap();
        let exs = piece_examples(&mut rng, 20);
        let (err, at) = check_params(
            &mut store,
            PROBES_PER_TENSOR,
            seed,
            || Graph::training(dropout_seed),
            |g, s| {
                let batch: Vec<&Example> = exs.iter().collect();
                Ok(m.loss(g, s, &batch)?.total)
            },
        );
        out.push((name, err, at));
    }

    {
        let cfg = tiny_transformer(8);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::<f64>::new();
        let m = TransformerModel::new(cfg, 20, &mut store, &mut rng).unwrap();
        let x = random_tensor(&mut rng, &[2, 4, 8], 1.0);
        let mem = random_tensor(&mut rng, &[2, 3, 8], 1.0);
        let enc_layer = m.encoder.layers()[0].clone();
        let dec_layer = m.decoder_layers()[0].clone();
        let (err, at) = check_params(&mut store, PROBES_PER_TENSOR, seed, Graph::new, |g, s| {
            let x = g.constant(x.clone());
            let mem = g.constant(mem.clone());
            let kb = g.constant_f64(&[2, 1, 1, 4], &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1e9, -1e9])?;
            let mb = g.constant_f64(&[2, 1, 1, 3], &[0.0, 0.0, 0.0, 0.0, -1e9, 0.0])?;
            let (att, w) = multi_head_attention(g, s, enc_layer.self_attention(), x, x, kb, 0.0)?;
            let h = transformer_layer(g, s, &enc_layer, x, kb, None)?;
            let d = transformer_layer(g, s, &dec_layer, h, kb, Some((mem, mb)))?;
            let parts = [g.sum(att), g.sum(w), g.sum(d)];
            let d2 = g.mul(d, d)?;
            let sq = g.sum(d2);
            let a = g.add(parts[0], parts[1])?;
            let b = g.add(parts[2], sq)?;
            g.add(a, b)
        });
        out.push(("transformer layers", err, at));
    }

    {
        let cfg = tiny_transformer(8);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::<f64>::new();
        let enc = TransformerEncoder::new(&cfg, 20, &mut store, &mut rng);
        let head = MlmHead::new(&cfg, 20, &mut store, &mut rng);
        let rows = enc.wrap(&[&[7, 8, 9, 10, 11, 12], &[13, 14, 15]]).0;
        let mut batch = mask_batch(&rows, 20, 0.5, &mut rng);
        if batch.targets.is_empty() {
            batch.targets.push((0, 1, rows[0][1]));
            batch.rows[0][1] = Special::Mask.id();
        }
        let (err, at) = check_params(
            &mut store,
            PROBES_PER_TENSOR,
            seed,
            || Graph::training(dropout_seed),
            |g, s| Ok(head.loss(g, s, &enc, &batch)?.expect("masked positions").0),
        );
        out.push(("masked-lm", err, at));
    }
    out
}

