use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::tensor::Tensor;
use std::f64::consts::PI;

/// Cosine annealing from `lr_init` at step 0 to `lr_final` at `total`.
pub fn cosine_lr(step: usize, total: usize, lr_init: f64, lr_final: f64) -> Result<f64> {
    if step > total || total == 0 {
        return Err(Error::invalid("cosine_lr", format!("step {step} outside 0..={total}")));
    }
    let frac = step as f64 / total as f64;
    Ok(lr_final + 0.5 * (lr_init - lr_final) * (1.0 + (PI * frac).cos()))
}

/// AdaMax moments for every parameter of a store.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaMax {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// First moments, in store order.
    pub m: Vec<Tensor>,
    /// Exponentially weighted infinity norms, in store order.
    pub u: Vec<Tensor>,
    /// Number of updates applied.
    pub t: u64,
}

impl AdaMax {
    pub fn new(store: &ParamStore, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros = || store.values().iter().map(|v| Tensor::zeros(v.shape())).collect();
        Self {
            beta1,
            beta2,
            eps,
            m: zeros(),
            u: zeros(),
            t: 0,
        }
    }

    /// One update with learning rate `lr`. Nothing is modified when any
    /// gradient is non-finite.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Tensor], lr: f64) -> Result<()> {
        if grads.len() != store.len() {
            return Err(Error::invalid(
                "adamax",
                format!("{} gradients for {} parameters", grads.len(), store.len()),
            ));
        }
        for (i, g) in grads.iter().enumerate() {
            let v = &store.values()[i];
            if g.shape() != v.shape() {
                return Err(Error::ShapeMismatch {
                    op: "adamax",
                    expected: v.shape().to_vec(),
                    got: g.shape().to_vec(),
                });
            }
            if !g.all_finite() {
                return Err(Error::NonFiniteGradient(store.names()[i].clone()));
            }
        }
        self.t += 1;
        let step = lr / (1.0 - self.beta1.powi(self.t as i32));
        for (i, g) in grads.iter().enumerate() {
            let theta = store.values_mut()[i].data_mut();
            let m = self.m[i].data_mut();
            let u = self.u[i].data_mut();
            for k in 0..theta.len() {
                let gk = g.data()[k] as f64;
                let mk = self.beta1 * m[k] as f64 + (1.0 - self.beta1) * gk;
                let uk = (self.beta2 * u[k] as f64).max(gk.abs());
                m[k] = mk as f32;
                u[k] = uk as f32;
                theta[k] = (theta[k] as f64 - step * mk / (uk + self.eps)) as f32;
            }
        }
        Ok(())
    }
}

/// Free-function form of [`AdaMax::step`].
pub fn adamax_step(store: &mut ParamStore, grads: &[Tensor], state: &mut AdaMax, lr: f64) -> Result<()> {
    state.step(store, grads, lr)
}
