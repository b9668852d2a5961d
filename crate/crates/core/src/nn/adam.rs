use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layers::ParamStore;
use crate::nn::real::{lit, Real};

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
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-7,
        }
    }
}

/// Bias-corrected Adam moments for every parameter of a store.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub t: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &ParamStore<T>, config: AdamConfig) -> Self {
        AdamState {
            config,
            t: 0,
            m: params.tensors().iter().map(|t| vec![T::zero(); t.len()]).collect(),
            v: params.tensors().iter().map(|t| vec![T::zero(); t.len()]).collect(),
        }
    }

    /// One update. Parameters whose gradient is `None` are left untouched and
    /// keep their moments.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &[Option<Vec<T>>]) -> Result<()> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(Error::Shape(format!(
                "adam: {} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        self.t += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        let (b1, b2): (T, T) = (lit(c.beta1), lit(c.beta2));
        let (lr, eps): (T, T) = (lit(c.lr), lit(c.eps));
        let (inv_bc1, inv_bc2): (T, T) = (lit(1.0 / bc1), lit(1.0 / bc2));
        for (i, g) in grads.iter().enumerate() {
            let Some(g) = g else { continue };
            let p = params.tensors_mut()[i].data_mut();
            if g.len() != p.len() {
                return Err(Error::Shape(format!("adam: grad {} has {} values, param {}", i, g.len(), p.len())));
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for k in 0..p.len() {
                m[k] = b1 * m[k] + (T::one() - b1) * g[k];
                v[k] = b2 * v[k] + (T::one() - b2) * g[k] * g[k];
                let mhat = m[k] * inv_bc1;
                let vhat = v[k] * inv_bc2;
                p[k] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor::Tensor;

    fn store(v: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("p", Tensor::full(&[3], v));
        s
    }

    #[test]
    fn zero_gradient_is_noop() {
        let mut s = store(0.7);
        let mut st = AdamState::new(&s, AdamConfig::default());
        st.step(&mut s, &[Some(vec![0.0; 3])]).unwrap();
        assert_eq!(s.tensors()[0].data(), &[0.7; 3]);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = store(0.0);
        let mut st = AdamState::new(&s, AdamConfig::default());
        st.step(&mut s, &[Some(vec![1.0; 3])]).unwrap();
        // mhat = vhat = 1, so the step is lr / (1 + eps)
        for &x in s.tensors()[0].data() {
            assert!((x + 1e-3).abs() < 1e-6, "{x}");
        }
    }

    #[test]
    fn repeated_steps_monotone() {
        let mut s = store(0.0);
        let mut st = AdamState::new(&s, AdamConfig::default());
        st.step(&mut s, &[Some(vec![-2.0; 3])]).unwrap();
        let after_one = s.tensors()[0].data()[0];
        st.step(&mut s, &[Some(vec![-2.0; 3])]).unwrap();
        let after_two = s.tensors()[0].data()[0];
        assert!(after_one > 0.0 && after_two > after_one);
    }
}
