use std::cell::RefCell;
use std::collections::{HashMap, HashSet};
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use super::ops::Op;

#[derive(Debug, Error)]
pub enum NumError {
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: expected {expected}, got shape {got:?}")]
    BadShape {
        op: &'static str,
        expected: String,
        got: Vec<usize>,
    },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("backward requires a scalar loss, got shape {got:?}")]
    NotScalar { got: Vec<usize> },
    #[error("{op}: index {index} out of range 0..{len}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("adam step aborted: non-finite gradient for parameter `{name}`")]
    NonFiniteGrad { name: String },
    #[error("{op}: empty input")]
    EmptyInput { op: &'static str },
}

pub type Result<T> = std::result::Result<T, NumError>;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

pub(crate) struct Node {
    pub(crate) id: u64,
    pub(crate) shape: Vec<usize>,
    pub(crate) data: Vec<f64>,
    pub(crate) requires_grad: bool,
    pub(crate) grad: RefCell<Option<Vec<f64>>>,
    pub(crate) parents: Vec<Tensor>,
    pub(crate) op: Option<Op>,
}

/// Immutable n-dimensional f64 array; row-major. Cloning is cheap
/// (shared storage). Only the gradient buffer is interior-mutable.
#[derive(Clone)]
pub struct Tensor(pub(crate) Rc<Node>);

impl Tensor {
    /// Untracked leaf from raw data.
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        Self::build(shape, data, false)
    }

    /// Gradient-tracked leaf (a parameter or an input under test).
    pub fn param(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        Self::build(shape, data, true)
    }

    fn build(shape: &[usize], data: Vec<f64>, requires_grad: bool) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(NumError::BadShape {
                op: "tensor",
                expected: format!("{} values for shape {:?}", n, shape),
                got: vec![data.len()],
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(NumError::NonFinite { op: "tensor" });
        }
        Ok(Tensor(Rc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape: shape.to_vec(),
            data,
            requires_grad,
            grad: RefCell::new(None),
            parents: Vec::new(),
            op: None,
        })))
    }

    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<f64>,
        parents: Vec<Tensor>,
        op: Op,
    ) -> Result<Tensor> {
        #[cfg(debug_assertions)]
        if data.iter().any(|v| !v.is_finite()) {
            return Err(NumError::NonFinite { op: op.name() });
        }
        let requires_grad = parents.iter().any(|p| p.0.requires_grad);
        Ok(Tensor(Rc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            data,
            requires_grad,
            grad: RefCell::new(None),
            parents,
            op: Some(op),
        })))
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::new(shape, vec![0.0; n]).expect("zeros")
    }

    pub fn full(shape: &[usize], value: f64) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        Tensor::new(shape, vec![value; n])
    }

    pub fn scalar(value: f64) -> Result<Tensor> {
        Tensor::new(&[1], vec![value])
    }

    /// Zero-mean normal samples with the given standard deviation.
    pub fn randn<R: Rng>(shape: &[usize], std: f64, rng: &mut R) -> Tensor {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                z * std
            })
            .collect();
        Tensor::new(shape, data).expect("randn")
    }

    /// Gradient-tracked normal-initialized leaf.
    pub fn randn_param<R: Rng>(shape: &[usize], std: f64, rng: &mut R) -> Tensor {
        let t = Tensor::randn(shape, std, rng);
        Tensor::param(shape, t.data().to_vec()).expect("randn_param")
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// The single value of a scalar tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.numel(), 1, "item() on non-scalar {:?}", self.shape());
        self.0.data[0]
    }

    /// Copy of the accumulated gradient, if any.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// Untracked leaf copy of this tensor's values.
    pub fn detach(&self) -> Tensor {
        Tensor::new(&self.0.shape, self.0.data.clone()).expect("detach")
    }

    /// Reverse-mode sweep from a scalar loss. Gradients accumulate into
    /// every tracked leaf reachable from `self`; calling twice without
    /// `zero_grad` doubles them.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(NumError::NotScalar {
                got: self.shape().to_vec(),
            });
        }
        if !self.0.requires_grad {
            return Ok(());
        }

        // Iterative post-order DFS restricted to the tracked subgraph.
        let mut order: Vec<Tensor> = Vec::new();
        let mut visited: HashSet<u64> = HashSet::new();
        let mut stack: Vec<(Tensor, usize)> = vec![(self.clone(), 0)];
        visited.insert(self.0.id);
        while let Some((node, pi)) = stack.pop() {
            let parents = &node.0.parents;
            if pi < parents.len() {
                let next = parents[pi].clone();
                stack.push((node, pi + 1));
                if next.0.requires_grad && visited.insert(next.0.id) {
                    stack.push((next, 0));
                }
            } else {
                order.push(node);
            }
        }

        let mut flowing: HashMap<u64, Vec<f64>> = HashMap::new();
        flowing.insert(self.0.id, vec![1.0]);

        for node in order.iter().rev() {
            let Some(grad_out) = flowing.remove(&node.0.id) else {
                continue;
            };
            match &node.0.op {
                None => {
                    // Tracked leaf: accumulate into the persistent buffer.
                    let mut slot = node.0.grad.borrow_mut();
                    match slot.as_mut() {
                        Some(buf) => {
                            for (b, g) in buf.iter_mut().zip(&grad_out) {
                                *b += g;
                            }
                        }
                        None => *slot = Some(grad_out),
                    }
                }
                Some(op) => {
                    let parent_grads = op.parent_grads(&node.0, &grad_out);
                    for (parent, pg) in node.0.parents.iter().zip(parent_grads) {
                        let Some(pg) = pg else { continue };
                        if !parent.0.requires_grad {
                            continue;
                        }
                        match flowing.entry(parent.0.id) {
                            std::collections::hash_map::Entry::Occupied(mut e) => {
                                for (b, g) in e.get_mut().iter_mut().zip(&pg) {
                                    *b += g;
                                }
                            }
                            std::collections::hash_map::Entry::Vacant(e) => {
                                e.insert(pg);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::ops;

    #[test]
    fn rejects_shape_data_disagreement() {
        assert!(Tensor::new(&[2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn rejects_non_finite_at_creation() {
        assert!(Tensor::new(&[2], vec![1.0, f64::NAN]).is_err());
        assert!(Tensor::new(&[1], vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn backward_requires_scalar() {
        let t = Tensor::param(&[2], vec![1.0, 2.0]).unwrap();
        assert!(matches!(t.backward(), Err(NumError::NotScalar { .. })));
    }

    #[test]
    fn repeated_backward_accumulates() {
        let w = Tensor::param(&[3], vec![1.0, 2.0, 3.0]).unwrap();
        let loss = ops::sum(&w).unwrap();
        loss.backward().unwrap();
        loss.backward().unwrap();
        assert_eq!(w.grad().unwrap(), vec![2.0, 2.0, 2.0]);
        w.zero_grad();
        loss.backward().unwrap();
        assert_eq!(w.grad().unwrap(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn grad_of_weighted_sum_is_the_fixed_factor() {
        // loss = sum(w * x), x fixed -> grad(w) = x
        let w = Tensor::param(&[3], vec![0.5, -1.0, 2.0]).unwrap();
        let x = Tensor::new(&[3], vec![3.0, 4.0, 5.0]).unwrap();
        let loss = ops::sum(&ops::mul(&w, &x).unwrap()).unwrap();
        loss.backward().unwrap();
        assert_eq!(w.grad().unwrap(), vec![3.0, 4.0, 5.0]);
        assert!(x.grad().is_none());
    }

    #[test]
    fn grad_of_mean_square() {
        // loss = mean(w^2) -> grad = 2w/n
        let w = Tensor::param(&[4], vec![1.0, -2.0, 3.0, 0.5]).unwrap();
        let loss = ops::mean(&ops::mul(&w, &w).unwrap()).unwrap();
        loss.backward().unwrap();
        let g = w.grad().unwrap();
        for (gi, wi) in g.iter().zip(w.data()) {
            assert!((gi - 2.0 * wi / 4.0).abs() < 1e-15);
        }
    }

    #[test]
    fn diamond_graph_accumulates_both_paths() {
        // loss = sum(w + w) -> grad = 2
        let w = Tensor::param(&[2], vec![1.0, 1.0]).unwrap();
        let loss = ops::sum(&ops::add(&w, &w).unwrap()).unwrap();
        loss.backward().unwrap();
        assert_eq!(w.grad().unwrap(), vec![2.0, 2.0]);
    }
}
