//! Adam optimizer with bias correction over a [`ParamStore`].

use crate::element::Element;
use crate::params::{ParamId, ParamStore};
use crate::tape::Gradients;
use crate::tape::TVar;
use crate::tensor::Tensor;

/// Default learning rate used for training.
pub const DEFAULT_LR: f64 = 1e-4;

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-parameter first/second moments plus the shared step counter.
pub struct AdamState<E: Element> {
    cfg: AdamConfig,
    m: Vec<Vec<E>>,
    v: Vec<Vec<E>>,
    step: u64,
}

impl<E: Element> AdamState<E> {
    pub fn new(store: &ParamStore<E>, cfg: AdamConfig) -> Self {
        let m = store
            .iter()
            .map(|(_, p)| vec![E::zero(); p.value.numel()])
            .collect();
        let v = store
            .iter()
            .map(|(_, p)| vec![E::zero(); p.value.numel()])
            .collect();
        Self {
            cfg,
            m,
            v,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update over all trainable parameters. `grad_of` maps a
    /// parameter to its gradient for this step (missing gradient = zero,
    /// which leaves moments decaying but applies no update direction).
    pub fn step(
        &mut self,
        store: &mut ParamStore<E>,
        grads: &Gradients<E>,
        vars: &[(ParamId, TVar)],
        lr: f64,
    ) {
        self.step += 1;
        let t = self.step as i32;
        let b1 = E::from_f64(self.cfg.beta1);
        let b2 = E::from_f64(self.cfg.beta2);
        let eps = E::from_f64(self.cfg.eps);
        let one = E::one();
        let bc1 = E::from_f64(1.0 - self.cfg.beta1.powi(t));
        let bc2 = E::from_f64(1.0 - self.cfg.beta2.powi(t));
        let lr_e = E::from_f64(lr);

        for &(pid, var) in vars {
            if !store.get(pid).trainable {
                continue;
            }
            let zero_grad;
            let grad: &Tensor<E> = match grads.get(var) {
                Some(g) => g,
                None => {
                    zero_grad = Tensor::zeros(store.value(pid).shape().to_vec());
                    &zero_grad
                }
            };
            let idx = pid.index();
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            let mut value = store.value(pid).clone();
            let data = value.data_mut();
            debug_assert_eq!(data.len(), grad.numel());
            for (((p, &g), mi), vi) in data
                .iter_mut()
                .zip(grad.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = b1 * *mi + (one - b1) * g;
                *vi = b2 * *vi + (one - b2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *p = *p - lr_e * m_hat / (v_hat.sqrt() + eps);
            }
            store.set_value(pid, value);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::Tape;

    fn setup(grad_value: f64) -> (ParamStore<f64>, AdamState<f64>, Gradients<f64>, Vec<(ParamId, TVar)>) {
        let mut store: ParamStore<f64> = ParamStore::new();
        let pid = store.add("p", Tensor::full(vec![4], 1.5), true).unwrap();
        let state = AdamState::new(&store, AdamConfig::default());
        let tape: Tape<f64> = Tape::new();
        let var = tape.leaf(store.value(pid).clone());
        // loss = grad_value * sum(p) has constant gradient grad_value
        let scaled = tape.mul_scalar(var, grad_value);
        let loss = tape.sum(scaled);
        let grads = tape.backward(loss).unwrap();
        (store, state, grads, vec![(pid, var)])
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let (mut store, mut state, grads, vars) = setup(0.0);
        state.step(&mut store, &grads, &vars, 1e-3);
        assert_eq!(store.value(vars[0].0).data(), &[1.5; 4]);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn constant_gradient_first_step_magnitude_is_lr() {
        // With constant gradient g, bias-corrected m_hat = g, v_hat = g^2,
        // so the first update is -lr * g / (|g| + eps) ~= -lr * sign(g).
        let (mut store, mut state, grads, vars) = setup(2.0);
        state.step(&mut store, &grads, &vars, 1e-3);
        for &p in store.value(vars[0].0).data() {
            let delta = p - 1.5;
            assert!(delta < 0.0, "update must oppose the gradient sign");
            assert!((delta.abs() - 1e-3).abs() < 1e-8, "delta {delta}");
        }

        let (mut store, mut state, grads, vars) = setup(-0.5);
        state.step(&mut store, &grads, &vars, 1e-3);
        for &p in store.value(vars[0].0).data() {
            assert!(p > 1.5);
        }
    }

    #[test]
    fn step_counter_increases() {
        let (mut store, mut state, grads, vars) = setup(1.0);
        for i in 1..=3 {
            state.step(&mut store, &grads, &vars, DEFAULT_LR);
            assert_eq!(state.step_count(), i);
        }
    }
}
