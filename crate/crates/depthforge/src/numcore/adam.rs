use std::collections::HashMap;

use super::tensor::{NumError, Result, Tensor};

/// Ordered, named collection of gradient-tracked parameter tensors.
/// Iteration order is insertion order, which keeps optimizer updates,
/// checkpoints and gradient accumulation deterministic.
#[derive(Clone, Default)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
    index: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor) {
        assert!(
            tensor.requires_grad(),
            "parameter `{name}` must be gradient-tracked"
        );
        assert!(
            !self.index.contains_key(name),
            "duplicate parameter `{name}`"
        );
        self.index.insert(name.to_string(), self.entries.len());
        self.entries.push((name.to_string(), tensor));
    }

    pub fn get(&self, name: &str) -> &Tensor {
        let i = *self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"));
        &self.entries[i].1
    }

    pub fn try_get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_values(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn zero_grads(&self) {
        for (_, t) in &self.entries {
            t.zero_grad();
        }
    }

    pub(crate) fn entry(&self, i: usize) -> (&str, &Tensor) {
        (&self.entries[i].0, &self.entries[i].1)
    }

    pub(crate) fn set_entry(&mut self, i: usize, tensor: Tensor) {
        self.entries[i].1 = tensor;
    }

    /// Copy with a single scalar entry nudged by `delta`; everything else
    /// is shared. Used by the finite-difference oracle.
    pub(crate) fn with_perturbed(&self, param: usize, elem: usize, delta: f64) -> ParamSet {
        let mut out = self.clone();
        let (_, t) = self.entry(param);
        let mut data = t.data().to_vec();
        data[elem] += delta;
        out.entries[param].1 = Tensor::param(t.shape(), data).expect("perturbed param");
        out
    }
}

/// Adam optimizer state: first/second moment buffers aligned with a
/// `ParamSet`, plus the shared hyperparameters.
#[derive(Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step_count: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(lr: f64, beta1: f64, beta2: f64, params: &ParamSet) -> Self {
        let m = params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        let v = params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        AdamState {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            step_count: 0,
            m,
            v,
        }
    }

    /// The main model's optimizer settings: lr 4e-3, beta1 0, beta2 0.99.
    pub fn main_model(params: &ParamSet) -> Self {
        Self::new(4e-3, 0.0, 0.99, params)
    }

    pub fn moments(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.m, &self.v)
    }

    pub fn restore_moments(&mut self, m: Vec<Vec<f64>>, v: Vec<Vec<f64>>) {
        assert_eq!(m.len(), self.m.len());
        assert_eq!(v.len(), self.v.len());
        self.m = m;
        self.v = v;
    }
}

/// One bias-corrected Adam update over every parameter with a gradient.
///
/// Parameters whose gradient is absent or identically zero are left
/// untouched (their moments as well), so a zero-gradient step is the
/// identity regardless of optimizer state. A non-finite gradient aborts
/// before anything is mutated and names the offending parameter.
pub fn adam_step(params: &mut ParamSet, state: &mut AdamState) -> Result<()> {
    let n = params.len();
    let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(n);
    for i in 0..n {
        let (name, t) = params.entry(i);
        match t.grad() {
            Some(g) => {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(NumError::NonFiniteGrad { name: name.to_string() });
                }
                grads.push(Some(g));
            }
            None => grads.push(None),
        }
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);

    for i in 0..n {
        let Some(g) = &grads[i] else { continue };
        if g.iter().all(|&v| v == 0.0) {
            continue;
        }
        let (_, tensor) = params.entry(i);
        let mut data = tensor.data().to_vec();
        let shape = tensor.shape().to_vec();
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        for j in 0..data.len() {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
            let mh = m[j] / bc1;
            let vh = v[j] / bc2;
            data[j] -= state.lr * mh / (vh.sqrt() + state.eps);
        }
        params.set_entry(i, Tensor::param(&shape, data)?);
    }
    Ok(())
}
