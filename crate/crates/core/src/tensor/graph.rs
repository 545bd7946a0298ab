use std::collections::HashMap;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::element::gemm;
use super::{rows_cols, Element, ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Layer-norm epsilon.
pub const LN_EPS: f64 = 1e-6;
/// Probabilities are floored here before taking the log in [`Graph::nll_loss`].
pub const LOG_FLOOR: f64 = 1e-12;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
        ta: bool,
        tb: bool,
        batch: usize,
        shared_b: bool,
        m: usize,
        k: usize,
        n: usize,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Minimum(Var, Var),
    Affine(Var, T),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    Rows {
        table: Var,
        ids: Vec<usize>,
    },
    Concat {
        parts: Vec<Var>,
        widths: Vec<usize>,
    },
    Slice {
        a: Var,
        start: usize,
        width: usize,
    },
    Reshape(Var),
    Permute {
        a: Var,
        perm: Vec<usize>,
    },
    Sum(Var),
    Mask(Var, Vec<T>),
    ScatterAdd {
        base: Var,
        src: Var,
        idx: Vec<usize>,
    },
    PadLast(Var),
    Nll {
        dist: Var,
        targets: Vec<usize>,
        weights: Vec<T>,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    param: Option<ParamId>,
}

/// Eager computation tape.
///
/// Each operation computes its value immediately and records how to route
/// gradients back to its inputs. Nodes are appended in evaluation order, so
/// the tape is already topologically sorted.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    params: HashMap<ParamId, Var>,
    training: bool,
    rng: ChaCha8Rng,
}

impl<T: Element> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Graph<T> {
    /// Inference graph: dropout is the identity.
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: HashMap::new(),
            training: false,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    /// Training graph with dropout masks drawn from `seed`.
    pub fn training(seed: u64) -> Self {
        Self {
            training: true,
            rng: ChaCha8Rng::seed_from_u64(seed),
            ..Self::new()
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node {
            value,
            op,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn derived(&mut self, shape: &[usize], data: Vec<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let mut value = Tensor::new(shape, data).expect("op output shape");
        value.requires_grad = inputs.iter().any(|v| self.nodes[v.0].value.requires_grad);
        self.push(value, op)
    }

    /// Record a tensor as a leaf; its `requires_grad` flag is honoured.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> Var {
        self.push(tensor, Op::Leaf)
    }

    /// Record a tensor that never receives gradient.
    pub fn constant(&mut self, mut tensor: Tensor<T>) -> Var {
        tensor.requires_grad = false;
        tensor.grad = None;
        self.push(tensor, Op::Leaf)
    }

    pub fn constant_f64(&mut self, shape: &[usize], data: &[f64]) -> Result<Var> {
        Ok(self.constant(Tensor::from_f64(shape, data)?))
    }

    /// Load a parameter onto the tape; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let src = store.get(id);
        let mut value = Tensor::new(src.shape(), src.data().to_vec()).expect("param");
        value.requires_grad = true;
        let v = self.push(value, Op::Leaf);
        self.nodes[v.0].param = Some(id);
        self.params.insert(id, v);
        v
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn data(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    /// Accumulated gradient of a leaf after [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].value.grad.as_deref()
    }

    fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].value.requires_grad
    }

    // ── linear algebra ───────────────────────────────────────────────

    /// Matrix product `a · b`.
    ///
    /// `a` may carry leading batch axes. `b` is either a single matrix shared
    /// across the batch, or has the same leading axes as `a`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, b, false, false)
    }

    /// Matrix product with either operand transposed over its last two axes.
    pub fn matmul_t(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let err = || Error::Dimension {
            op: "matmul",
            lhs: sa.clone(),
            rhs: sb.clone(),
        };
        if sa.len() < 2 || sb.len() < 2 {
            return Err(err());
        }
        let (ra, ca) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (rb, cb) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        let (m, ka) = if ta { (ca, ra) } else { (ra, ca) };
        let (kb, n) = if tb { (cb, rb) } else { (rb, cb) };
        if ka != kb {
            return Err(err());
        }
        let k = ka;
        let lead_a = &sa[..sa.len() - 2];
        let batch: usize = lead_a.iter().product();
        let shared_b = sb.len() == 2;
        if !shared_b && sb[..sb.len() - 2] != *lead_a {
            return Err(err());
        }
        if shared_b && ta && batch > 1 {
            return Err(err());
        }
        let mut out_shape = lead_a.to_vec();
        out_shape.extend([m, n]);
        let mut out = vec![T::zero(); batch * m * n];
        {
            let ad = self.data(a);
            let bd = self.data(b);
            if shared_b && !ta {
                gemm(batch * m, k, n, ad, false, bd, tb, &mut out, false);
            } else {
                for i in 0..batch {
                    let bs = if shared_b { bd } else { &bd[i * k * n..(i + 1) * k * n] };
                    gemm(
                        m,
                        k,
                        n,
                        &ad[i * m * k..(i + 1) * m * k],
                        ta,
                        bs,
                        tb,
                        &mut out[i * m * n..(i + 1) * m * n],
                        false,
                    );
                }
            }
        }
        let op = Op::MatMul {
            a,
            b,
            ta,
            tb,
            batch,
            shared_b,
            m,
            k,
            n,
        };
        Ok(self.derived(&out_shape, out, op, &[a, b]))
    }

    // ── elementwise ──────────────────────────────────────────────────

    fn binary(&mut self, a: Var, b: Var, name: &'static str) -> Result<(Vec<usize>, Maps)> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        let out = broadcast_shape(sa, sb).ok_or_else(|| Error::Dimension {
            op: name,
            lhs: sa.to_vec(),
            rhs: sb.to_vec(),
        })?;
        let maps = Maps {
            a: broadcast_map(&out, sa),
            b: broadcast_map(&out, sb),
        };
        Ok((out, maps))
    }

    fn zip_with(&self, a: Var, b: Var, shape: &[usize], maps: &Maps, f: impl Fn(T, T) -> T) -> Vec<T> {
        let (ad, bd) = (self.data(a), self.data(b));
        match (&maps.a, &maps.b) {
            (Bmap::Same, Bmap::Same) => ad.iter().zip(bd).map(|(&x, &y)| f(x, y)).collect(),
            _ => {
                let n: usize = shape.iter().product();
                (0..n)
                    .map(|i| f(ad[maps.a.at(i)], bd[maps.b.at(i)]))
                    .collect()
            }
        }
    }

    /// Elementwise sum with NumPy-style broadcasting.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (shape, maps) = self.binary(a, b, "add")?;
        let data = self.zip_with(a, b, &shape, &maps, |x, y| x + y);
        Ok(self.derived(&shape, data, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (shape, maps) = self.binary(a, b, "sub")?;
        let data = self.zip_with(a, b, &shape, &maps, |x, y| x - y);
        Ok(self.derived(&shape, data, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise product with broadcasting.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (shape, maps) = self.binary(a, b, "mul")?;
        let data = self.zip_with(a, b, &shape, &maps, |x, y| x * y);
        Ok(self.derived(&shape, data, Op::Mul(a, b), &[a, b]))
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var> {
        let (shape, maps) = self.binary(a, b, "minimum")?;
        let data = self.zip_with(a, b, &shape, &maps, |x, y| if x <= y { x } else { y });
        Ok(self.derived(&shape, data, Op::Minimum(a, b), &[a, b]))
    }

    /// `a * scale + shift`.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let (s, t) = (T::from_f64(scale), T::from_f64(shift));
        let data = self.data(a).iter().map(|&x| x * s + t).collect();
        let shape = self.shape(a).to_vec();
        self.derived(&shape, data, Op::Affine(a, s), &[a])
    }

    pub fn scale(&mut self, a: Var, scale: f64) -> Var {
        self.affine(a, scale, 0.0)
    }

    fn unary(&mut self, a: Var, op: Op<T>, f: impl Fn(T) -> T) -> Var {
        let data = self.data(a).iter().map(|&x| f(x)).collect();
        let shape = self.shape(a).to_vec();
        self.derived(&shape, data, op, &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), |x| x.tanh())
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| if x > T::zero() { x } else { T::zero() })
    }

    /// Inverted dropout; identity on inference graphs or when `p == 0`.
    pub fn dropout(&mut self, a: Var, p: f64) -> Var {
        if !self.training || p <= 0.0 {
            return a;
        }
        let keep = T::from_f64(1.0 / (1.0 - p));
        let n = self.value(a).len();
        let mask: Vec<T> = (0..n)
            .map(|_| {
                if self.rng.random::<f64>() < p {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        let data = self.data(a).iter().zip(&mask).map(|(&x, &m)| x * m).collect();
        let shape = self.shape(a).to_vec();
        self.derived(&shape, data, Op::Mask(a, mask), &[a])
    }

    // ── normalisation ────────────────────────────────────────────────

    /// Softmax over the last axis, max-subtracted.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.data().iter().any(|v| !v.is_finite() && *v != T::neg_infinity()) {
            return Err(Error::NumericInput("softmax"));
        }
        let (rows, cols) = rows_cols(x.shape());
        let mut out = x.data().to_vec();
        for r in 0..rows {
            softmax_row(&mut out[r * cols..(r + 1) * cols]);
        }
        let shape = x.shape().to_vec();
        Ok(self.derived(&shape, out, Op::Softmax(a), &[a]))
    }

    /// Layer normalisation over the last axis followed by `gain`/`bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let (rows, cols) = rows_cols(&shape);
        if self.value(gain).len() != cols || self.value(bias).len() != cols {
            return Err(Error::Dimension {
                op: "layer_norm",
                lhs: shape,
                rhs: self.shape(gain).to_vec(),
            });
        }
        let eps = T::from_f64(LN_EPS);
        let inv_n = T::from_f64(1.0 / cols as f64);
        let xd = self.data(x);
        let gd = self.data(gain);
        let bd = self.data(bias);
        let mut xhat = vec![T::zero(); rows * cols];
        let mut rstd = vec![T::zero(); rows];
        let mut out = vec![T::zero(); rows * cols];
        for r in 0..rows {
            let row = &xd[r * cols..(r + 1) * cols];
            let mean = row.iter().copied().sum::<T>() * inv_n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_n;
            let rs = T::one() / (var + eps).sqrt();
            rstd[r] = rs;
            for c in 0..cols {
                let h = (row[c] - mean) * rs;
                xhat[r * cols + c] = h;
                out[r * cols + c] = h * gd[c] + bd[c];
            }
        }
        let op = Op::LayerNorm {
            x,
            gain,
            bias,
            xhat,
            rstd,
        };
        Ok(self.derived(&shape, out, op, &[x, gain, bias]))
    }

    // ── indexing and layout ──────────────────────────────────────────

    /// Gather rows of a 2-D table: `[rows, d]` → `[ids.len(), d]`.
    pub fn rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let shape = self.shape(table);
        if shape.len() != 2 {
            return Err(Error::Dimension {
                op: "rows",
                lhs: shape.to_vec(),
                rhs: vec![ids.len()],
            });
        }
        let (n, d) = (shape[0], shape[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= n) {
            return Err(Error::Index { index: bad, len: n });
        }
        if ids.is_empty() {
            return Err(Error::Contract("rows: empty id list".into()));
        }
        let td = self.data(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            out.extend_from_slice(&td[i * d..(i + 1) * d]);
        }
        let op = Op::Rows {
            table,
            ids: ids.to_vec(),
        };
        Ok(self.derived(&[ids.len(), d], out, op, &[table]))
    }

    /// Concatenate along the last axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = self.shape(parts[0]).to_vec();
        let lead = &first[..first.len() - 1];
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.len() != first.len() || s[..s.len() - 1] != *lead {
                return Err(Error::Dimension {
                    op: "concat",
                    lhs: first.clone(),
                    rhs: s.to_vec(),
                });
            }
            widths.push(*s.last().unwrap());
        }
        let total: usize = widths.iter().sum();
        let rows: usize = lead.iter().product();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.data(p)[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        let op = Op::Concat {
            parts: parts.to_vec(),
            widths,
        };
        Ok(self.derived(&shape, out, op, parts))
    }

    /// Columns `start..start + width` of the last axis.
    pub fn slice_last(&mut self, a: Var, start: usize, width: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let (rows, cols) = rows_cols(&shape);
        if start + width > cols || width == 0 {
            return Err(Error::Index {
                index: start + width,
                len: cols,
            });
        }
        let ad = self.data(a);
        let mut out = Vec::with_capacity(rows * width);
        for r in 0..rows {
            out.extend_from_slice(&ad[r * cols + start..r * cols + start + width]);
        }
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = width;
        Ok(self.derived(&out_shape, out, Op::Slice { a, start, width }, &[a]))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != self.value(a).len() {
            return Err(Error::Dimension {
                op: "reshape",
                lhs: self.shape(a).to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let data = self.data(a).to_vec();
        Ok(self.derived(shape, data, Op::Reshape(a), &[a]))
    }

    /// Axis permutation: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, a: Var, perm: &[usize]) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let mut check = perm.to_vec();
        check.sort_unstable();
        if check != (0..shape.len()).collect::<Vec<_>>() {
            return Err(Error::Dimension {
                op: "permute",
                lhs: shape,
                rhs: perm.to_vec(),
            });
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let src_index = permute_index(&shape, perm);
        let ad = self.data(a);
        let out = src_index.iter().map(|&i| ad[i]).collect();
        let op = Op::Permute {
            a,
            perm: perm.to_vec(),
        };
        Ok(self.derived(&out_shape, out, op, &[a]))
    }

    /// Sum of all elements, as a one-element tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.data(a).iter().copied().sum::<T>();
        self.derived(&[1], vec![s], Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Multiply by a fixed mask of the same shape (no gradient to the mask).
    pub fn mask(&mut self, a: Var, mask: Vec<T>) -> Result<Var> {
        if mask.len() != self.value(a).len() {
            return Err(Error::Dimension {
                op: "mask",
                lhs: self.shape(a).to_vec(),
                rhs: vec![mask.len()],
            });
        }
        let data = self.data(a).iter().zip(&mask).map(|(&x, &m)| x * m).collect();
        let shape = self.shape(a).to_vec();
        Ok(self.derived(&shape, data, Op::Mask(a, mask), &[a]))
    }

    /// `out = base; out[r, idx[r, j]] += src[r, j]` for `base: [R, V]`, `src: [R, N]`.
    pub fn scatter_add(&mut self, base: Var, src: Var, idx: &[usize]) -> Result<Var> {
        let sb = self.shape(base).to_vec();
        let ss = self.shape(src).to_vec();
        let (rows, v) = rows_cols(&sb);
        let (srows, n) = rows_cols(&ss);
        if rows != srows || idx.len() != rows * n {
            return Err(Error::Dimension {
                op: "scatter_add",
                lhs: sb,
                rhs: ss,
            });
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= v) {
            return Err(Error::Index { index: bad, len: v });
        }
        let mut out = self.data(base).to_vec();
        let sd = self.data(src);
        for r in 0..rows {
            for j in 0..n {
                out[r * v + idx[r * n + j]] += sd[r * n + j];
            }
        }
        let op = Op::ScatterAdd {
            base,
            src,
            idx: idx.to_vec(),
        };
        Ok(self.derived(&sb, out, op, &[base, src]))
    }

    /// Zero-pad the last axis to `width`.
    pub fn pad_last(&mut self, a: Var, width: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let (rows, cols) = rows_cols(&shape);
        if width < cols {
            return Err(Error::Dimension {
                op: "pad_last",
                lhs: shape,
                rhs: vec![width],
            });
        }
        if width == cols {
            return Ok(a);
        }
        let ad = self.data(a);
        let mut out = vec![T::zero(); rows * width];
        for r in 0..rows {
            out[r * width..r * width + cols].copy_from_slice(&ad[r * cols..(r + 1) * cols]);
        }
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = width;
        Ok(self.derived(&out_shape, out, Op::PadLast(a), &[a]))
    }

    // ── losses ───────────────────────────────────────────────────────

    /// Weighted negative log-likelihood `Σ w_r · −ln max(p[r, t_r], 1e-12)`.
    ///
    /// `dist` rows are probability vectors over the last axis.
    pub fn nll_loss(&mut self, dist: Var, targets: &[usize], weights: &[f64]) -> Result<Var> {
        let shape = self.shape(dist).to_vec();
        let (rows, v) = rows_cols(&shape);
        if targets.len() != rows || weights.len() != rows {
            return Err(Error::Dimension {
                op: "nll_loss",
                lhs: shape,
                rhs: vec![targets.len()],
            });
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= v) {
            return Err(Error::Index { index: bad, len: v });
        }
        let floor = T::from_f64(LOG_FLOOR);
        let dd = self.data(dist);
        let weights: Vec<T> = weights.iter().map(|&w| T::from_f64(w)).collect();
        let loss = targets
            .iter()
            .enumerate()
            .map(|(r, &t)| -weights[r] * dd[r * v + t].max(floor).ln())
            .sum::<T>();
        let op = Op::Nll {
            dist,
            targets: targets.to_vec(),
            weights,
        };
        Ok(self.derived(&[1], vec![loss], op, &[dist]))
    }

    // ── reverse pass ─────────────────────────────────────────────────

    /// Accumulate `d loss / d leaf` into every reachable leaf that requires grad.
    ///
    /// Calling twice without clearing adds the gradients together.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = Vec::new();
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].value.requires_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                self.nodes[i].value.accumulate_grad(&g);
                continue;
            }
            self.propagate(i, &g, &mut grads);
        }
        Ok(())
    }

    /// Move parameter-leaf gradients into the store, adding to any already there.
    pub fn flush_grads(&mut self, store: &mut ParamStore<T>) {
        for node in &mut self.nodes {
            if let (Some(id), Some(g)) = (node.param, node.value.grad.take()) {
                store.get_mut(id).accumulate_grad(&g);
            }
        }
    }

    fn propagate(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul {
                a,
                b,
                ta,
                tb,
                batch,
                shared_b,
                m,
                k,
                n,
            } => {
                let ad = self.data(a);
                let bd = self.data(b);
                if let Some(ga) = self.slot(a, grads) {
                    if shared_b && !ta {
                        let rows = batch * m;
                        gemm(rows, n, k, g, false, bd, !tb, ga, true);
                    } else {
                        for bi in 0..batch {
                            let gs = &g[bi * m * n..(bi + 1) * m * n];
                            let bs = if shared_b { bd } else { &bd[bi * k * n..(bi + 1) * k * n] };
                            let out = &mut ga[bi * m * k..(bi + 1) * m * k];
                            if ta {
                                gemm(k, n, m, bs, tb, gs, true, out, true);
                            } else {
                                gemm(m, n, k, gs, false, bs, !tb, out, true);
                            }
                        }
                    }
                }
                if let Some(gb) = self.slot(b, grads) {
                    if shared_b && !ta {
                        let rows = batch * m;
                        if tb {
                            gemm(n, rows, k, g, true, ad, false, gb, true);
                        } else {
                            gemm(k, rows, n, ad, true, g, false, gb, true);
                        }
                    } else {
                        for bi in 0..batch {
                            let gs = &g[bi * m * n..(bi + 1) * m * n];
                            let as_ = &ad[bi * m * k..(bi + 1) * m * k];
                            let out = if shared_b {
                                &mut gb[..]
                            } else {
                                &mut gb[bi * k * n..(bi + 1) * k * n]
                            };
                            if tb {
                                gemm(n, m, k, gs, true, as_, ta, out, true);
                            } else {
                                gemm(k, m, n, as_, !ta, gs, false, out, true);
                            }
                        }
                    }
                }
            }
            &Op::Add(a, b) | &Op::Sub(a, b) => {
                let neg = matches!(node.op, Op::Sub(..));
                let out_shape = node.value.shape();
                let map_a = broadcast_map(out_shape, self.shape(a));
                let map_b = broadcast_map(out_shape, self.shape(b));
                if let Some(ga) = self.slot(a, grads) {
                    scatter_grad(ga, &map_a, g, |gi, _| gi);
                }
                if let Some(gb) = self.slot(b, grads) {
                    if neg {
                        scatter_grad(gb, &map_b, g, |gi, _| -gi);
                    } else {
                        scatter_grad(gb, &map_b, g, |gi, _| gi);
                    }
                }
            }
            &Op::Mul(a, b) => {
                let out_shape = node.value.shape();
                let map_a = broadcast_map(out_shape, self.shape(a));
                let map_b = broadcast_map(out_shape, self.shape(b));
                let (ad, bd) = (self.data(a), self.data(b));
                if let Some(ga) = self.slot(a, grads) {
                    scatter_grad(ga, &map_a, g, |gi, i| gi * bd[map_b.at(i)]);
                }
                if let Some(gb) = self.slot(b, grads) {
                    scatter_grad(gb, &map_b, g, |gi, i| gi * ad[map_a.at(i)]);
                }
            }
            &Op::Minimum(a, b) => {
                let out_shape = node.value.shape();
                let map_a = broadcast_map(out_shape, self.shape(a));
                let map_b = broadcast_map(out_shape, self.shape(b));
                let (ad, bd) = (self.data(a), self.data(b));
                let a_wins = |i: usize| ad[map_a.at(i)] <= bd[map_b.at(i)];
                if let Some(ga) = self.slot(a, grads) {
                    scatter_grad(ga, &map_a, g, |gi, i| if a_wins(i) { gi } else { T::zero() });
                }
                if let Some(gb) = self.slot(b, grads) {
                    scatter_grad(gb, &map_b, g, |gi, i| if a_wins(i) { T::zero() } else { gi });
                }
            }
            &Op::Affine(a, s) => {
                if let Some(ga) = self.slot(a, grads) {
                    ga.iter_mut().zip(g).for_each(|(d, &gi)| *d += gi * s);
                }
            }
            &Op::Tanh(a) => {
                let y = node.value.data();
                if let Some(ga) = self.slot(a, grads) {
                    for ((d, &gi), &yi) in ga.iter_mut().zip(g).zip(y) {
                        *d += gi * (T::one() - yi * yi);
                    }
                }
            }
            &Op::Sigmoid(a) => {
                let y = node.value.data();
                if let Some(ga) = self.slot(a, grads) {
                    for ((d, &gi), &yi) in ga.iter_mut().zip(g).zip(y) {
                        *d += gi * yi * (T::one() - yi);
                    }
                }
            }
            &Op::Relu(a) => {
                let y = node.value.data();
                if let Some(ga) = self.slot(a, grads) {
                    for ((d, &gi), &yi) in ga.iter_mut().zip(g).zip(y) {
                        if yi > T::zero() {
                            *d += gi;
                        }
                    }
                }
            }
            &Op::Softmax(a) => {
                let y = node.value.data();
                let (rows, cols) = rows_cols(node.value.shape());
                if let Some(ga) = self.slot(a, grads) {
                    for r in 0..rows {
                        let ys = &y[r * cols..(r + 1) * cols];
                        let gs = &g[r * cols..(r + 1) * cols];
                        let dot: T = ys.iter().zip(gs).map(|(&p, &q)| p * q).sum();
                        for c in 0..cols {
                            ga[r * cols + c] += ys[c] * (gs[c] - dot);
                        }
                    }
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let (rows, cols) = rows_cols(node.value.shape());
                let gd = self.data(*gain);
                if let Some(gx) = self.slot(*x, grads) {
                    let inv_n = T::from_f64(1.0 / cols as f64);
                    for r in 0..rows {
                        let gs = &g[r * cols..(r + 1) * cols];
                        let hs = &xhat[r * cols..(r + 1) * cols];
                        let mut mean_d = T::zero();
                        let mut mean_dh = T::zero();
                        for c in 0..cols {
                            let d = gs[c] * gd[c];
                            mean_d += d;
                            mean_dh += d * hs[c];
                        }
                        mean_d = mean_d * inv_n;
                        mean_dh = mean_dh * inv_n;
                        for c in 0..cols {
                            let d = gs[c] * gd[c];
                            gx[r * cols + c] += rstd[r] * (d - mean_d - hs[c] * mean_dh);
                        }
                    }
                }
                if let Some(gg) = self.slot(*gain, grads) {
                    for r in 0..rows {
                        for c in 0..cols {
                            gg[c] += g[r * cols + c] * xhat[r * cols + c];
                        }
                    }
                }
                if let Some(gb) = self.slot(*bias, grads) {
                    for r in 0..rows {
                        for c in 0..cols {
                            gb[c] += g[r * cols + c];
                        }
                    }
                }
            }
            Op::Rows { table, ids } => {
                let d = self.shape(*table)[1];
                if let Some(gt) = self.slot(*table, grads) {
                    for (r, &id) in ids.iter().enumerate() {
                        for c in 0..d {
                            gt[id * d + c] += g[r * d + c];
                        }
                    }
                }
            }
            Op::Concat { parts, widths } => {
                let total: usize = widths.iter().sum();
                let rows = g.len() / total;
                let mut offset = 0;
                for (&p, &w) in parts.iter().zip(widths) {
                    if let Some(gp) = self.slot(p, grads) {
                        for r in 0..rows {
                            for c in 0..w {
                                gp[r * w + c] += g[r * total + offset + c];
                            }
                        }
                    }
                    offset += w;
                }
            }
            &Op::Slice { a, start, width } => {
                let (rows, cols) = rows_cols(self.shape(a));
                if let Some(ga) = self.slot(a, grads) {
                    for r in 0..rows {
                        for c in 0..width {
                            ga[r * cols + start + c] += g[r * width + c];
                        }
                    }
                }
            }
            &Op::Reshape(a) => {
                if let Some(ga) = self.slot(a, grads) {
                    ga.iter_mut().zip(g).for_each(|(d, &gi)| *d += gi);
                }
            }
            Op::Permute { a, perm } => {
                let src_index = permute_index(self.shape(*a), perm);
                if let Some(ga) = self.slot(*a, grads) {
                    for (o, &s) in src_index.iter().enumerate() {
                        ga[s] += g[o];
                    }
                }
            }
            &Op::Sum(a) => {
                if let Some(ga) = self.slot(a, grads) {
                    ga.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::Mask(a, mask) => {
                if let Some(ga) = self.slot(*a, grads) {
                    for ((d, &gi), &m) in ga.iter_mut().zip(g).zip(mask) {
                        *d += gi * m;
                    }
                }
            }
            Op::ScatterAdd { base, src, idx } => {
                let (rows, v) = rows_cols(node.value.shape());
                if let Some(gb) = self.slot(*base, grads) {
                    gb.iter_mut().zip(g).for_each(|(d, &gi)| *d += gi);
                }
                if let Some(gs) = self.slot(*src, grads) {
                    let n = idx.len() / rows;
                    for r in 0..rows {
                        for j in 0..n {
                            gs[r * n + j] += g[r * v + idx[r * n + j]];
                        }
                    }
                }
            }
            &Op::PadLast(a) => {
                let (rows, cols) = rows_cols(self.shape(a));
                let width = *node.value.shape().last().unwrap();
                if let Some(ga) = self.slot(a, grads) {
                    for r in 0..rows {
                        for c in 0..cols {
                            ga[r * cols + c] += g[r * width + c];
                        }
                    }
                }
            }
            Op::Nll {
                dist,
                targets,
                weights,
            } => {
                let (_, v) = rows_cols(self.shape(*dist));
                let floor = T::from_f64(LOG_FLOOR);
                let dd = self.data(*dist);
                if let Some(gd) = self.slot(*dist, grads) {
                    for (r, &t) in targets.iter().enumerate() {
                        let p = dd[r * v + t];
                        if p > floor {
                            gd[r * v + t] += -g[0] * weights[r] / p;
                        }
                    }
                }
            }
        }
    }

    /// Gradient buffer for `v`, allocated on first use; `None` if `v` needs no grad.
    fn slot<'g>(&self, v: Var, grads: &'g mut [Option<Vec<T>>]) -> Option<&'g mut Vec<T>> {
        if !self.needs_grad(v) {
            return None;
        }
        let n = self.value(v).len();
        Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); n]))
    }
}

pub(crate) fn sigmoid<T: Element>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn softmax_row<T: Element>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        // Fully masked row: fall back to uniform.
        let u = T::one() / T::from_f64(row.len() as f64);
        row.iter_mut().for_each(|v| *v = u);
        return;
    }
    let mut total = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    let inv = T::one() / total;
    row.iter_mut().for_each(|v| *v = *v * inv);
}

struct Maps {
    a: Bmap,
    b: Bmap,
}

/// How an operand's elements map onto a broadcast output.
enum Bmap {
    Same,
    /// Operand repeats cyclically (trailing-axis broadcast).
    Cycle(usize),
    Index(Vec<usize>),
}

impl Bmap {
    fn at(&self, i: usize) -> usize {
        match self {
            Bmap::Same => i,
            Bmap::Cycle(n) => i % n,
            Bmap::Index(v) => v[i],
        }
    }
}

fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let pad = |s: &[usize], i: usize| {
        let off = rank - s.len();
        if i < off {
            1
        } else {
            s[i - off]
        }
    };
    (0..rank)
        .map(|i| {
            let (x, y) = (pad(a, i), pad(b, i));
            match (x, y) {
                _ if x == y => Some(x),
                (1, _) => Some(y),
                (_, 1) => Some(x),
                _ => None,
            }
        })
        .collect()
}

fn broadcast_map(out: &[usize], input: &[usize]) -> Bmap {
    if out == input {
        return Bmap::Same;
    }
    let off = out.len() - input.len();
    let n_in: usize = input.iter().product();
    // Trailing-axis broadcast: input equals the last axes of out (modulo leading 1s).
    let trimmed: Vec<usize> = input.iter().copied().skip_while(|&d| d == 1).collect();
    if out.ends_with(&trimmed) {
        return Bmap::Cycle(n_in.max(1));
    }
    let mut strides = vec![0usize; out.len()];
    let mut s = 1;
    for i in (0..input.len()).rev() {
        if input[i] != 1 {
            strides[i + off] = s;
        }
        s *= input[i];
    }
    let total: usize = out.iter().product();
    let mut idx = vec![0usize; out.len()];
    let mut map = Vec::with_capacity(total);
    let mut cur = 0usize;
    for _ in 0..total {
        map.push(cur);
        for ax in (0..out.len()).rev() {
            idx[ax] += 1;
            cur += strides[ax];
            if idx[ax] < out[ax] {
                break;
            }
            cur -= strides[ax] * out[ax];
            idx[ax] = 0;
        }
    }
    Bmap::Index(map)
}

fn scatter_grad<T: Element>(dst: &mut [T], map: &Bmap, g: &[T], f: impl Fn(T, usize) -> T) {
    match map {
        Bmap::Same => {
            for (i, (d, &gi)) in dst.iter_mut().zip(g).enumerate() {
                *d += f(gi, i);
            }
        }
        _ => {
            for (i, &gi) in g.iter().enumerate() {
                dst[map.at(i)] += f(gi, i);
            }
        }
    }
}

/// For each output position of a permutation, the linear index it reads from.
fn permute_index(shape: &[usize], perm: &[usize]) -> Vec<usize> {
    let rank = shape.len();
    let mut in_strides = vec![1usize; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * shape[i + 1];
    }
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let total: usize = shape.iter().product();
    let mut idx = vec![0usize; rank];
    let mut cur = 0usize;
    let mut out = Vec::with_capacity(total);
    for _ in 0..total {
        out.push(cur);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            cur += strides[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            cur -= strides[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
    out
}
