//! Named parameter storage with deterministic ordering.

use super::TensorD;
use ndarray::IxDyn;
use rand::Rng;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct ParamStore {
    params: BTreeMap<String, TensorD>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> &TensorD {
        self.params
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut TensorD {
        self.params
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"))
    }

    pub fn insert(&mut self, name: &str, value: TensorD) {
        self.params.insert(name.to_string(), value);
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &TensorD)> {
        self.params.iter()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn total_elements(&self) -> usize {
        self.params.values().map(|v| v.len()).sum()
    }

    pub fn any_non_finite(&self) -> bool {
        self.params.values().any(|p| p.iter().any(|v| !v.is_finite()))
    }

    /// Kaiming-style uniform init: U(-s, s) with s = sqrt(1 / fan_in).
    pub fn init_uniform(&mut self, name: &str, shape: &[usize], fan_in: usize, rng: &mut impl Rng) {
        let bound = (1.0 / fan_in.max(1) as f64).sqrt();
        let mut t = super::zeros(shape);
        for v in t.iter_mut() {
            *v = rng.gen_range(-bound..bound);
        }
        self.params.insert(name.to_string(), t);
    }

    pub fn init_zeros(&mut self, name: &str, shape: &[usize]) {
        self.params
            .insert(name.to_string(), TensorD::zeros(IxDyn(shape)));
    }

    pub fn init_normal(&mut self, name: &str, shape: &[usize], std: f64, rng: &mut impl Rng) {
        let mut t = super::zeros(shape);
        for v in t.iter_mut() {
            *v = rng.sample::<f64, _>(rand_distr::StandardNormal) * std;
        }
        self.params.insert(name.to_string(), t);
    }

    pub fn init_const(&mut self, name: &str, shape: &[usize], value: f64) {
        self.params.insert(name.to_string(), super::full(shape, value));
    }
}
