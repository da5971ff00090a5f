use std::collections::BTreeMap;

use super::tensor::Param;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Adam with decoupled weight decay. First/second moments are keyed by
/// parameter name and persist across calls.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub betas: (f64, f64),
    pub eps: f64,
    pub weight_decay: f64,
    state: BTreeMap<String, Moments>,
}

impl AdamW {
    pub fn new(weight_decay: f64) -> Self {
        Self {
            betas: (0.9, 0.999),
            eps: 1e-8,
            weight_decay,
            state: BTreeMap::new(),
        }
    }

    pub fn with_betas(mut self, beta1: f64, beta2: f64) -> Self {
        self.betas = (beta1, beta2);
        self
    }

    /// One update of every param in `params` at learning rate `lr`.
    /// `step_index` counts from 1 and drives bias correction.
    ///
    /// All gradients are validated before any value is touched.
    pub fn step<'p, I>(&mut self, params: I, lr: f64, step_index: u64) -> Result<()>
    where
        I: IntoIterator<Item = &'p mut Param>,
    {
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(Error::contract(format!("learning rate must be > 0, got {lr}")));
        }
        if step_index == 0 {
            return Err(Error::contract("AdamW step_index starts at 1"));
        }
        let params: Vec<&mut Param> = params.into_iter().collect();
        for p in &params {
            if let Some(index) = p.grad.data().iter().position(|g| !g.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("gradient of {}", p.name),
                    index,
                });
            }
        }
        let (b1, b2) = self.betas;
        let bc1 = 1.0 - b1.powi(step_index as i32);
        let bc2 = 1.0 - b2.powi(step_index as i32);
        for p in params {
            let n = p.value.len();
            let st = self.state.entry(p.name.clone()).or_insert_with(|| Moments {
                m: vec![0.0; n],
                v: vec![0.0; n],
            });
            let decay = if p.decay { 1.0 - lr * self.weight_decay } else { 1.0 };
            let grad = p.grad.data();
            let value = p.value.data_mut();
            for i in 0..n {
                let g = grad[i];
                st.m[i] = b1 * st.m[i] + (1.0 - b1) * g;
                st.v[i] = b2 * st.v[i] + (1.0 - b2) * g * g;
                let mhat = st.m[i] / bc1;
                let vhat = st.v[i] / bc2;
                value[i] = value[i] * decay - lr * mhat / (vhat.sqrt() + self.eps);
            }
            if let Some(min) = p.clamp_min {
                p.value.data_mut().iter_mut().for_each(|x| *x = x.max(min));
            }
        }
        Ok(())
    }
}

/// Learning rate after `epoch` completed epochs: `lr * factor^(epoch / step)`.
pub fn step_lr(base: f64, epoch: usize, step_epochs: usize, factor: f64) -> f64 {
    base * factor.powi((epoch / step_epochs.max(1)) as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Tensor;

    fn scalar_param(x: f64) -> Param {
        Param::new("x", Tensor::scalar(x))
    }

    #[test]
    fn zero_gradient_zero_decay_is_noop() {
        let mut p = scalar_param(1.5);
        let mut opt = AdamW::new(0.0);
        opt.step([&mut p], 0.1, 1).unwrap();
        assert_eq!(p.value.data(), &[1.5]);
    }

    #[test]
    fn positive_gradient_decreases_value() {
        let mut p = scalar_param(1.0);
        p.grad = Tensor::scalar(1.0);
        AdamW::new(0.0).step([&mut p], 0.1, 1).unwrap();
        assert!(p.value.data()[0] < 1.0);
        // first Adam step moves by ~lr
        assert!((p.value.data()[0] - 0.9).abs() < 1e-6);
    }

    #[test]
    fn non_finite_gradient_aborts_with_name() {
        let mut p = Param::new("medmam/w_c", Tensor::scalar(1.0));
        p.grad = Tensor::scalar(f64::INFINITY);
        let err = AdamW::new(0.0).step([&mut p], 0.1, 1).unwrap_err();
        assert!(err.to_string().contains("medmam/w_c"));
        assert_eq!(p.value.data(), &[1.0]);
    }

    #[test]
    fn clamp_min_is_enforced() {
        let mut p = scalar_param(1e-6).with_clamp_min(1e-6);
        p.grad = Tensor::scalar(1.0);
        AdamW::new(0.0).step([&mut p], 0.5, 1).unwrap();
        assert_eq!(p.value.data(), &[1e-6]);
    }

    #[test]
    fn step_lr_schedule() {
        assert_eq!(step_lr(1.0, 4, 5, 0.3), 1.0);
        assert_eq!(step_lr(1.0, 5, 5, 0.3), 0.3);
        assert_eq!(step_lr(2.0, 10, 5, 0.3), 2.0 * 0.3f64.powi(2));
    }
}
