use serde::{Deserialize, Serialize};

use super::{Element, ParamId, ParamStore};
use crate::error::{contract, Result};

/// Inverse-square-root schedule with linear warmup:
/// `base_lr · min(step^-0.5, step · warmup^-1.5)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub warmup_steps: u64,
}

impl LrSchedule {
    pub fn new(base_lr: f64, warmup_steps: u64) -> Result<Self> {
        if warmup_steps == 0 || base_lr <= 0.0 || !base_lr.is_finite() {
            return Err(contract(format!(
                "schedule needs base_lr > 0 and warmup > 0, got {base_lr} / {warmup_steps}"
            )));
        }
        Ok(Self {
            base_lr,
            warmup_steps,
        })
    }

    pub fn lr(&self, step: u64) -> Result<f64> {
        if step == 0 {
            return Err(contract("learning-rate schedule is undefined at step 0"));
        }
        let s = step as f64;
        let w = self.warmup_steps as f64;
        Ok(self.base_lr * s.powf(-0.5).min(s * w.powf(-1.5)))
    }
}

/// Learning-rate policy for one optimizer group.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrPolicy {
    Constant { lr: f64 },
    Warmup(LrSchedule),
}

impl LrPolicy {
    pub fn lr(&self, step: u64) -> Result<f64> {
        match self {
            LrPolicy::Constant { lr } => Ok(*lr),
            LrPolicy::Warmup(s) => s.lr(step),
        }
    }
}

/// Moment estimates for one group of parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub first_moment: Vec<Vec<f32>>,
    pub second_moment: Vec<Vec<f32>>,
}

impl AdamState {
    pub fn new<T: Element>(store: &ParamStore<T>, params: &[ParamId]) -> Self {
        let zeros = |id: &ParamId| vec![0.0f32; store.get(*id).len()];
        Self {
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            first_moment: params.iter().map(zeros).collect(),
            second_moment: params.iter().map(zeros).collect(),
        }
    }
}

/// Adam over a fixed list of parameters with its own learning-rate policy.
#[derive(Clone, Debug)]
pub struct Adam {
    pub params: Vec<ParamId>,
    pub state: AdamState,
    pub policy: LrPolicy,
}

impl Adam {
    pub fn new<T: Element>(store: &ParamStore<T>, params: Vec<ParamId>, policy: LrPolicy) -> Self {
        let state = AdamState::new(store, &params);
        Self {
            params,
            state,
            policy,
        }
    }

    /// Learning rate the next update will apply.
    pub fn next_lr(&self) -> Result<f64> {
        self.policy.lr(self.state.step + 1)
    }

    /// One update at the policy's learning rate; returns the rate used.
    pub fn step<T: Element>(&mut self, store: &mut ParamStore<T>) -> Result<f64> {
        let lr = self.next_lr()?;
        adam_step(store, &self.params, &mut self.state, lr)?;
        Ok(lr)
    }
}

/// Bias-corrected Adam update; gradients are zeroed afterwards.
pub fn adam_step<T: Element>(
    store: &mut ParamStore<T>,
    params: &[ParamId],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if let Some(&missing) = params.iter().find(|&&id| store.get(id).grad.is_none()) {
        return Err(contract(format!(
            "parameter {} has no gradient",
            store.name(missing)
        )));
    }
    if state.first_moment.len() != params.len() {
        return Err(contract("optimizer state does not match parameter list"));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (slot, &id) in params.iter().enumerate() {
        let p = store.get_mut(id);
        let grad = p.grad.take().expect("checked above");
        let m = &mut state.first_moment[slot];
        let v = &mut state.second_moment[slot];
        for (i, (w, g)) in p.data_mut().iter_mut().zip(&grad).enumerate() {
            let g = g.to_f64();
            let mi = b1 * m[i] as f64 + (1.0 - b1) * g;
            let vi = b2 * v[i] as f64 + (1.0 - b2) * g * g;
            m[i] = mi as f32;
            v[i] = vi as f32;
            let update = lr * (mi / c1) / ((vi / c2).sqrt() + eps);
            *w = T::from_f64(w.to_f64() - update);
        }
        p.grad = Some(vec![T::zero(); grad.len()]);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Graph, Tensor};

    #[test]
    fn schedule_closed_forms() {
        let s = LrSchedule::new(2e-3, 20_000).unwrap();
        let at = s.lr(20_000).unwrap();
        assert!((at - 2e-3 * 20_000f64.powf(-0.5)).abs() < 1e-15);
        assert!((at - 1.41421e-5).abs() < 1e-10);

        let d = LrSchedule::new(0.2, 10_000).unwrap();
        assert!((d.lr(100).unwrap() - 2e-5).abs() < 1e-15);
        assert!(d.lr(0).is_err());
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut store = ParamStore::<f64>::new();
        let id = store.add("w", Tensor::from_f64(&[2], &[1.0, -2.0]).unwrap());
        store.get_mut(id).grad = Some(vec![0.0, 0.0]);
        let mut st = AdamState::new(&store, &[id]);
        adam_step(&mut store, &[id], &mut st, 0.1).unwrap();
        assert_eq!(store.get(id).data(), &[1.0, -2.0]);
        assert_eq!(store.get(id).grad.as_deref(), Some(&[0.0, 0.0][..]));
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut store = ParamStore::<f64>::new();
        let id = store.add("w", Tensor::scalar(0.0));
        store.get_mut(id).grad = Some(vec![1.0]);
        let mut st = AdamState::new(&store, &[id]);
        adam_step(&mut store, &[id], &mut st, 0.1).unwrap();
        // m̂ = 1, v̂ = 1 → Δ = −lr / (1 + ε)
        let delta = store.get(id).data()[0];
        assert!((delta + 0.1 / (1.0 + 1e-8)).abs() < 1e-9, "{delta}");
        assert_eq!(st.step, 1);
    }

    #[test]
    fn missing_gradient_is_contract_error() {
        let mut store = ParamStore::<f64>::new();
        let id = store.add("w", Tensor::scalar(0.0));
        let mut st = AdamState::new(&store, &[id]);
        assert!(adam_step(&mut store, &[id], &mut st, 0.1).is_err());
    }

    #[test]
    fn quadratic_descends() {
        let mut store = ParamStore::<f64>::new();
        let id = store.add("x", Tensor::scalar(5.0));
        let mut opt = Adam::new(&store, vec![id], LrPolicy::Constant { lr: 0.1 });
        let mut trace = vec![5.0f64];
        for _ in 0..100 {
            let mut g = Graph::new();
            let x = g.param(&store, id);
            let sq = g.mul(x, x).unwrap();
            let loss = g.sum(sq);
            g.backward(loss).unwrap();
            g.flush_grads(&mut store);
            opt.step(&mut store).unwrap();
            trace.push(store.get(id).item().abs());
        }
        assert!(*trace.last().unwrap() < 5.0);
        // Decreasing trend: each block of ten ends below where it began.
        for w in trace.chunks(10).filter(|c| c.len() == 10) {
            if w[0] > 0.5 {
                assert!(w[9] < w[0], "{w:?}");
            }
        }
    }
}
