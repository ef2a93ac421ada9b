use serde::{Deserialize, Serialize};

use super::tensor::Param;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-7;

/// Adam moments for a fixed, ordered list of parameters.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    /// One bias-corrected Adam update. `weight_decay` adds `decay·w` to the
    /// gradient before the moment update (coupled L2).
    ///
    /// Parameters must be passed in the same order on every call.
    pub fn step(&mut self, params: &mut [&mut Param], lr: f64, weight_decay: f64) {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        assert_eq!(self.m.len(), params.len(), "parameter list changed between Adam steps");
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - BETA1.powi(t);
        let bc2 = 1.0 - BETA2.powi(t);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let w = &mut p.value.data;
            let g = &p.grad.data;
            for j in 0..w.len() {
                let gj = g[j] + weight_decay * w[j];
                m[j] = BETA1 * m[j] + (1.0 - BETA1) * gj;
                v[j] = BETA2 * v[j] + (1.0 - BETA2) * gj * gj;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                w[j] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
            }
        }
    }
}
