//! Adaptive moment estimation.

use ndarray::Array2;

use super::{ParamStore, Scalar};

pub struct Adam<T: Scalar> {
    m: Vec<Array2<T>>,
    v: Vec<Array2<T>>,
    step: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(store: &ParamStore<T>) -> Self {
        let shapes: Vec<_> = store.iter().map(|(_, v)| v.dim()).collect();
        Adam {
            m: shapes.iter().map(|&d| Array2::zeros(d)).collect(),
            v: shapes.iter().map(|&d| Array2::zeros(d)).collect(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update with mean gradients (aligned with the store order).
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &[Array2<T>], lr: f64) {
        assert_eq!(grads.len(), store.len());
        self.step += 1;
        let b1 = T::from_f64(self.beta1);
        let b2 = T::from_f64(self.beta2);
        let one_m_b1 = T::from_f64(1.0 - self.beta1);
        let one_m_b2 = T::from_f64(1.0 - self.beta2);
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let alpha = T::from_f64(lr * bc2.sqrt() / bc1);
        let eps = T::from_f64(self.eps);
        for i in 0..grads.len() {
            let g = &grads[i];
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            ndarray::Zip::from(m.view_mut()).and(g).for_each(|m, &g| *m = *m * b1 + g * one_m_b1);
            ndarray::Zip::from(v.view_mut()).and(g).for_each(|v, &g| *v = *v * b2 + g * g * one_m_b2);
            let id = super::params::ParamId(i);
            let p = store.value_mut(id);
            ndarray::Zip::from(p.view_mut())
                .and(&*m)
                .and(&*v)
                .for_each(|p, &m, &v| *p = *p - alpha * m / (v.sqrt() + eps));
        }
    }
}

/// Linear warmup to a constant base rate.
pub fn warmup_lr(base: f64, step: u64, warmup: u64) -> f64 {
    if warmup == 0 || step >= warmup {
        base
    } else {
        base * step as f64 / warmup as f64
    }
}
