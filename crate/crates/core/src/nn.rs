//! Named parameters, initialization, layer helpers and the Adam optimizer.

use std::collections::BTreeMap;

use rand::Rng;

use crate::autograd::{Gradients, Graph, Var};
use crate::tensor::Tensor;

/// Named weight tensors, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.params.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.params.iter()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    /// Drops every parameter whose name starts with `prefix`.
    pub fn remove_prefix(&mut self, prefix: &str) {
        self.params.retain(|k, _| !k.starts_with(prefix));
    }

    /// Parameters whose names start with `prefix`.
    pub fn subset(&self, prefix: &str) -> ParamStore {
        ParamStore {
            params: self
                .params
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    pub fn extend(&mut self, other: ParamStore) {
        self.params.extend(other.params);
    }

    /// Registers every parameter as a trainable leaf of `graph`.
    pub fn bind<'g>(&self, graph: &'g Graph) -> Bound<'g> {
        Bound {
            vars: self
                .params
                .iter()
                .map(|(k, v)| (k.clone(), graph.param(v.clone())))
                .collect(),
            graph,
        }
    }

    /// Registers every parameter as a constant of `graph` (inference).
    pub fn bind_frozen<'g>(&self, graph: &'g Graph) -> Bound<'g> {
        Bound {
            vars: self
                .params
                .iter()
                .map(|(k, v)| (k.clone(), graph.constant(v.clone())))
                .collect(),
            graph,
        }
    }
}

/// Parameters bound into one graph.
pub struct Bound<'g> {
    vars: BTreeMap<String, Var<'g>>,
    graph: &'g Graph,
}

impl<'g> Bound<'g> {
    /// Wraps existing graph variables as named parameters.
    pub fn from_vars(graph: &'g Graph, vars: BTreeMap<String, Var<'g>>) -> Self {
        Self { vars, graph }
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn var(&self, name: &str) -> Var<'g> {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter `{name}`"))
    }

    pub fn has(&self, name: &str) -> bool {
        self.vars.contains_key(name)
    }

    /// Gradients keyed by parameter name (zeros where unused).
    pub fn collect_grads(&self, grads: &Gradients) -> BTreeMap<String, Tensor> {
        self.vars
            .iter()
            .map(|(k, v)| (k.clone(), grads.get_or_zeros(*v)))
            .collect()
    }

    pub fn conv2d(&self, name: &str, x: Var<'g>, stride: usize, pad: usize) -> Var<'g> {
        x.conv2d(self.var(&format!("{name}.weight")), self.var(&format!("{name}.bias")), stride, pad)
    }

    pub fn conv3d(&self, name: &str, x: Var<'g>, pad: usize) -> Var<'g> {
        x.conv3d(self.var(&format!("{name}.weight")), self.var(&format!("{name}.bias")), pad)
    }

    /// `x (m, in) -> (m, out)` with weight stored as `(in, out)`.
    pub fn linear(&self, name: &str, x: Var<'g>) -> Var<'g> {
        x.matmul(self.var(&format!("{name}.weight")))
            .add_row_vector(self.var(&format!("{name}.bias")))
    }
}

/// Uniform He initialization with bound `sqrt(6 / fan_in)`.
pub fn he_uniform(rng: &mut impl Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = (6.0 / fan_in as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.random_range(-bound..bound))
}

pub fn add_conv2d(store: &mut ParamStore, rng: &mut impl Rng, name: &str, cin: usize, cout: usize, k: usize) {
    store.insert(format!("{name}.weight"), he_uniform(rng, &[cout, cin, k, k], cin * k * k));
    store.insert(format!("{name}.bias"), Tensor::zeros(&[cout]));
}

pub fn add_conv3d(store: &mut ParamStore, rng: &mut impl Rng, name: &str, cin: usize, cout: usize, k: usize) {
    store.insert(
        format!("{name}.weight"),
        he_uniform(rng, &[cout, cin, k, k, k], cin * k * k * k),
    );
    store.insert(format!("{name}.bias"), Tensor::zeros(&[cout]));
}

pub fn add_linear(store: &mut ParamStore, rng: &mut impl Rng, name: &str, fin: usize, fout: usize) {
    store.insert(format!("{name}.weight"), he_uniform(rng, &[fin, fout], fin));
    store.insert(format!("{name}.bias"), Tensor::zeros(&[fout]));
}

/// Multiplies a parameter in place, e.g. to start a residual branch small.
pub fn rescale(store: &mut ParamStore, name: &str, factor: f64) {
    if let Some(t) = store.get_mut(name) {
        for v in t.data_mut() {
            *v *= factor;
        }
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }
}

impl Adam {
    /// One update of every parameter that has a gradient.
    pub fn step(&mut self, params: &mut ParamStore, grads: &BTreeMap<String, Tensor>, lr: f64) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (name, g) in grads {
            let Some(p) = params.get_mut(name) else { continue };
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(g.shape()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(g.shape()));
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                *pv -= lr * (*mv / bc1) / ((*vv / bc2).sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_minimizes_quadratic() {
        let mut store = ParamStore::new();
        store.insert("x", Tensor::new(&[2], vec![3.0, -2.0]));
        let mut opt = Adam::default();
        for _ in 0..500 {
            let g = Graph::new();
            let b = store.bind(&g);
            let x = b.var("x");
            let loss = x.mul(x).sum();
            let grads = b.collect_grads(&g.backward(loss));
            opt.step(&mut store, &grads, 0.05);
        }
        assert!(store.get("x").unwrap().max_abs() < 1e-2);
    }

    #[test]
    fn remove_prefix_strips_heads() {
        let mut s = ParamStore::new();
        s.insert("backbone.a", Tensor::scalar(1.0));
        s.insert("intra.b", Tensor::scalar(1.0));
        s.remove_prefix("intra.");
        assert!(s.contains("backbone.a") && !s.contains("intra.b"));
    }
}
