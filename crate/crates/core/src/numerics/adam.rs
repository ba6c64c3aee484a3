use serde::{Deserialize, Serialize};

use super::tape::{Gradients, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        AdamState {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One bias-corrected Adam update. `lr` overrides `cfg.lr` so callers can
/// apply a schedule.
pub fn adam_step(
    params: &mut ParamStore,
    grads: &Gradients,
    state: &mut AdamState,
    cfg: &AdamConfig,
    lr: f64,
) -> Result<()> {
    if state.m.len() != params.len() {
        return Err(Error::ShapeMismatch {
            op: "adam_step",
            lhs: vec![params.len()],
            rhs: vec![state.m.len()],
        });
    }
    for ((id, g), m) in params.ids().zip(grads.iter()).zip(&state.m) {
        if params.get(id).shape() != g.shape() || m.shape() != g.shape() {
            return Err(Error::ShapeMismatch {
                op: "adam_step",
                lhs: params.get(id).shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let ids: Vec<_> = params.ids().collect();
    for (i, id) in ids.into_iter().enumerate() {
        let g = grads.get(id).data();
        let m = state.m[i].data_mut();
        for (mv, gv) in m.iter_mut().zip(g) {
            *mv = cfg.beta1 * *mv + (1.0 - cfg.beta1) * gv;
        }
        let v = state.v[i].data_mut();
        for (vv, gv) in v.iter_mut().zip(g) {
            *vv = cfg.beta2 * *vv + (1.0 - cfg.beta2) * gv * gv;
        }
        let (m, v) = (state.m[i].data(), state.v[i].data());
        let p = params.get_mut(id).data_mut();
        for j in 0..p.len() {
            let mhat = m[j] / bc1;
            let vhat = v[j] / bc2;
            p[j] -= lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(g: Vec<f64>) -> (ParamStore, Gradients) {
        let mut ps = ParamStore::new();
        let id = ps.add("w", Tensor::row(vec![0.5, -0.25, 1.0]));
        let mut grads = Gradients::zeros_like(&ps);
        let mut tape = crate::numerics::Tape::new(&ps);
        // grads = g via d/dw sum(w * g)
        let w = tape.param(id);
        let gn = tape.input(Tensor::row(g));
        let prod = tape.mul(w, gn).unwrap();
        let loss = tape.sum(prod);
        tape.backward_into(loss, 1.0, &mut grads).unwrap();
        (ps, grads)
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let (mut ps, grads) = setup(vec![0.3, -2.0, 1e-3]);
        let before = ps.get(crate::numerics::ParamId(0)).clone();
        let mut st = AdamState::new(&ps);
        let cfg = AdamConfig::default();
        adam_step(&mut ps, &grads, &mut st, &cfg, 0.01).unwrap();
        let after = ps.get(crate::numerics::ParamId(0));
        for ((b, a), g) in before.data().iter().zip(after.data()).zip(grads.get(crate::numerics::ParamId(0)).data()) {
            let delta = a - b;
            assert!(delta.abs() <= 0.01 * (1.0 + 1e-6));
            assert!((delta + 0.01 * g.signum()).abs() < 1e-4);
        }
        assert_eq!(st.step, 1);
    }

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let (mut ps, grads) = setup(vec![1.0, 1.0, 1.0]);
        let mut st = AdamState::new(&ps);
        let cfg = AdamConfig::default();
        adam_step(&mut ps, &grads, &mut st, &cfg, 0.01).unwrap();
        let m1 = st.m[0].clone();
        let zero = Gradients::zeros_like(&ps);
        let snapshot = ps.clone();
        let mut st2 = st.clone();
        st2.m.iter_mut().for_each(|m| m.fill(0.0));
        st2.v.iter_mut().for_each(|v| v.fill(0.0));
        let mut ps2 = ps.clone();
        adam_step(&mut ps2, &zero, &mut st2, &cfg, 0.01).unwrap();
        assert_eq!(ps2, snapshot);
        adam_step(&mut ps, &zero, &mut st, &cfg, 0.01).unwrap();
        for (a, b) in st.m[0].data().iter().zip(m1.data()) {
            assert!((a - 0.9 * b).abs() < 1e-15);
        }
    }

    #[test]
    fn deterministic() {
        let run = || {
            let (mut ps, grads) = setup(vec![0.1, 0.2, -0.3]);
            let mut st = AdamState::new(&ps);
            for _ in 0..3 {
                adam_step(&mut ps, &grads, &mut st, &AdamConfig::default(), 1e-3).unwrap();
            }
            ps
        };
        assert_eq!(run(), run());
    }
}
