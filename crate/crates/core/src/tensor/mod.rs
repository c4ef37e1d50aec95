//! Minimal dense-tensor engine with reverse-mode automatic differentiation.
//!
//! Tensors are 64-bit, row-major, and immutable once created except for the
//! gradient buffer (populated by [`Tensor::backward`]) and parameter data
//! (updated in place by the optimizer). The computation graph is define-by-run:
//! every forward pass builds a fresh DAG of nodes whose backward closures
//! scatter upstream gradients into their parents.

use std::cell::{Ref, RefCell};
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{CoreError, Result};

mod adam;
mod ops;

pub use adam::AdamState;
pub use ops::PadMode;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

type BackwardFn = Box<dyn Fn(&[f64])>;

struct Inner {
    id: u64,
    shape: Vec<usize>,
    data: RefCell<Vec<f64>>,
    grad: RefCell<Option<Vec<f64>>>,
    requires_grad: bool,
    parents: Vec<Tensor>,
    backward_fn: Option<BackwardFn>,
}

/// Dense n-dimensional real array participating in a reverse-mode
/// differentiation graph. Cloning is cheap (shared handle).
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<Inner>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Tensor(id={}, shape={:?}, requires_grad={})",
            self.inner.id, self.inner.shape, self.inner.requires_grad
        )
    }
}

impl Tensor {
    fn make(
        shape: Vec<usize>,
        data: Vec<f64>,
        requires_grad: bool,
        parents: Vec<Tensor>,
        backward_fn: Option<BackwardFn>,
    ) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            inner: Rc::new(Inner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data: RefCell::new(data),
                grad: RefCell::new(None),
                requires_grad,
                parents,
                backward_fn,
            }),
        }
    }

    /// Leaf tensor from explicit data.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(CoreError::Shape(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Self::make(shape.to_vec(), data, false, Vec::new(), None))
    }

    /// Scalar leaf.
    pub fn scalar(v: f64) -> Self {
        Self::make(vec![1], vec![v], false, Vec::new(), None)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Self::make(shape.to_vec(), vec![0.0; n], false, Vec::new(), None)
    }

    pub fn full(shape: &[usize], v: f64) -> Self {
        let n: usize = shape.iter().product();
        Self::make(shape.to_vec(), vec![v; n], false, Vec::new(), None)
    }

    /// Interior node produced by an operation.
    pub(crate) fn from_op(shape: Vec<usize>, data: Vec<f64>, parents: Vec<Tensor>, back: BackwardFn) -> Self {
        let track = parents.iter().any(|p| p.inner.requires_grad);
        if track {
            Self::make(shape, data, true, parents, Some(back))
        } else {
            // Dead branch for differentiation: drop parent references so
            // no-grad forward passes free intermediates eagerly.
            Self::make(shape, data, false, Vec::new(), None)
        }
    }

    /// Mark this leaf as a trainable parameter.
    pub fn requires_grad(mut self) -> Self {
        {
            let inner = Rc::get_mut(&mut self.inner)
                .expect("requires_grad must be set before the tensor is shared");
            inner.requires_grad = true;
        }
        self
    }

    pub fn is_grad_tracked(&self) -> bool {
        self.inner.requires_grad
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn numel(&self) -> usize {
        self.inner.data.borrow().len()
    }

    pub fn data(&self) -> Ref<'_, Vec<f64>> {
        self.inner.data.borrow()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.inner.data.borrow().clone()
    }

    /// Scalar value; panics if the tensor is not a single element.
    pub fn item(&self) -> f64 {
        let d = self.inner.data.borrow();
        assert_eq!(d.len(), 1, "item() on non-scalar tensor");
        d[0]
    }

    /// Replace the data buffer (same shape). Used by the optimizer and by
    /// finite-difference probes.
    pub fn set_data(&self, new: &[f64]) {
        let mut d = self.inner.data.borrow_mut();
        assert_eq!(d.len(), new.len(), "set_data length mismatch");
        d.copy_from_slice(new);
    }

    /// Mutate one element in place.
    pub fn nudge(&self, index: usize, delta: f64) {
        self.inner.data.borrow_mut()[index] += delta;
    }

    /// Gradient buffer as a vector; zeros when backward has not reached
    /// this tensor.
    pub fn grad_to_vec(&self) -> Vec<f64> {
        match self.inner.grad.borrow().as_ref() {
            Some(g) => g.clone(),
            None => vec![0.0; self.numel()],
        }
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    pub(crate) fn accumulate_grad(&self, contrib: &[f64]) {
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(g) => {
                for (gi, ci) in g.iter_mut().zip(contrib) {
                    *gi += ci;
                }
            }
            None => *slot = Some(contrib.to_vec()),
        }
    }

    /// Leaf copy sharing no graph history (gradients do not flow past it).
    pub fn detach(&self) -> Tensor {
        Tensor::make(self.inner.shape.clone(), self.to_vec(), false, Vec::new(), None)
    }

    /// Reverse-mode differentiation from a scalar loss. Gradients accumulate
    /// into every reachable tensor with `requires_grad`; repeated calls
    /// without [`Tensor::zero_grad`] add up.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(CoreError::Config(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape()
            )));
        }
        if !self.inner.requires_grad {
            return Err(CoreError::Config(
                "backward on a loss that is not connected to any differentiable tensor".into(),
            ));
        }

        let order = self.topo_order();
        // Interior gradients are per-pass scratch; only leaf gradients
        // accumulate across calls.
        for node in &order {
            if node.inner.backward_fn.is_some() {
                *node.inner.grad.borrow_mut() = None;
            }
        }
        self.accumulate_grad(&[1.0]);
        for node in order.iter().rev() {
            if let Some(back) = &node.inner.backward_fn {
                let grad = node.inner.grad.borrow();
                if let Some(g) = grad.as_ref() {
                    back(g);
                }
            }
        }
        Ok(())
    }

    /// Post-order DFS over the differentiable subgraph (iterative; graphs
    /// from deep nets can exceed the stack).
    fn topo_order(&self) -> Vec<Tensor> {
        let mut order = Vec::new();
        let mut visited = std::collections::HashSet::new();
        // (node, next child index to visit)
        let mut stack: Vec<(Tensor, usize)> = Vec::new();
        if visited.insert(self.inner.id) {
            stack.push((self.clone(), 0));
        }
        while let Some((node, child)) = stack.pop() {
            if child < node.inner.parents.len() {
                let next = node.inner.parents[child].clone();
                stack.push((node, child + 1));
                if next.inner.requires_grad && visited.insert(next.inner.id) {
                    stack.push((next, 0));
                }
            } else {
                order.push(node);
            }
        }
        order
    }
}
