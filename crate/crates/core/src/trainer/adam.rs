//! Adam with bias correction.

use ndarray::Array4;

use crate::nn::ParamSet;

/// Optimizer state: first/second moments per parameter tensor, in parameter
/// registration order.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Steps taken (bias-correction exponent).
    pub t: u64,
    pub m: Vec<Array4<f64>>,
    pub v: Vec<Array4<f64>>,
}

impl Adam {
    pub fn new(params: &ParamSet, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let zeros: Vec<Array4<f64>> = params
            .ids()
            .map(|id| Array4::zeros(params.value(id).dim()))
            .collect();
        Self {
            beta1,
            beta2,
            epsilon,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One update over all parameters. `grads` must align with the parameter
    /// registration order.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Array4<f64>], lr: f64) {
        assert_eq!(grads.len(), params.len(), "gradient/parameter count mismatch");
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (idx, id) in params.ids().enumerate() {
            let g = &grads[idx];
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            ndarray::Zip::from(&mut *m).and(g).for_each(|m, &g| {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            });
            ndarray::Zip::from(&mut *v).and(g).for_each(|v, &g| {
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            });
            let w = params.value_mut(id);
            ndarray::Zip::from(w).and(&*m).and(&*v).for_each(|w, &m, &v| {
                let m_hat = m / bc1;
                let v_hat = v / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
            });
        }
    }
}
