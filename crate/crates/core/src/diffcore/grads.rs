use std::collections::BTreeMap;

use super::tensor::{Param, Tensor};

/// Parameter cotangents keyed by parameter name, accumulated across the
/// backward closures of one batch.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    map: BTreeMap<String, Tensor>,
}

impl Gradients {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, g: Tensor) {
        match self.map.get_mut(name) {
            Some(acc) => acc.add_assign(&g),
            None => {
                self.map.insert(name.to_string(), g);
            }
        }
    }

    pub fn add_slice(&mut self, name: &str, shape: &[usize], g: &[f64]) {
        self.add(name, Tensor::new(shape.to_vec(), g.to_vec()).expect("gradient shape"));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.map.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }

    /// Add into each param's `grad`; params with no entry are left as is.
    pub fn accumulate_into<'p>(&self, params: impl IntoIterator<Item = &'p mut Param>) {
        for p in params {
            if let Some(g) = self.map.get(&p.name) {
                p.accumulate(g);
            }
        }
    }
}
