//! Adam / AdamW with optional global-norm gradient clipping.

use super::params::ParamStore;
use super::TensorD;
use std::collections::BTreeMap;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// decoupled weight decay (AdamW) when nonzero
    pub weight_decay: f64,
    /// clip the global gradient norm before stepping
    pub max_grad_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            max_grad_norm: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Adam {
    pub config: AdamConfig,
    m: BTreeMap<String, TensorD>,
    v: BTreeMap<String, TensorD>,
    t: u64,
}

/// Euclidean norm over the concatenation of all gradients.
pub fn global_grad_norm(grads: &BTreeMap<String, TensorD>) -> f64 {
    grads
        .values()
        .map(|g| g.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

/// Scale all gradients so the global norm is at most `max_norm`.
pub fn clip_global_norm(grads: &mut BTreeMap<String, TensorD>, max_norm: f64) -> f64 {
    let norm = global_grad_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.values_mut() {
            g.mapv_inplace(|v| v * s);
        }
    }
    norm
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            ..Default::default()
        }
    }

    /// One update. Returns the pre-clip global gradient norm.
    pub fn step(&mut self, store: &mut ParamStore, grads: &BTreeMap<String, TensorD>) -> f64 {
        let mut grads = grads.clone();
        let norm = match self.config.max_grad_norm {
            Some(max) => clip_global_norm(&mut grads, max),
            None => global_grad_norm(&grads),
        };
        self.t += 1;
        let b1 = self.config.beta1;
        let b2 = self.config.beta2;
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        for (name, g) in &grads {
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| super::zeros(g.shape()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| super::zeros(g.shape()));
            *m = &*m * b1 + g * (1.0 - b1);
            *v = &*v * b2 + &g.mapv(|x| x * x) * (1.0 - b2);
            let m_hat = &*m / bc1;
            let v_hat = &*v / bc2;
            let p = store.get_mut(name);
            if self.config.weight_decay > 0.0 {
                let keep = 1.0 - self.config.lr * self.config.weight_decay;
                p.mapv_inplace(|x| x * keep);
            }
            let update = &m_hat / &(v_hat.mapv(f64::sqrt) + self.config.eps);
            p.zip_mut_with(&update, |x, &u| *x -= self.config.lr * u);
        }
        norm
    }
}
