//! Dense f64 tensors with reverse-mode differentiation.
//!
//! A `Tensor` is a cheaply clonable handle to a node in an implicit
//! computation graph. Ops record their parents and a VJP closure; calling
//! [`Tensor::backward`] on a scalar loss walks the graph in reverse
//! topological order and accumulates gradients into every tracked node.
//!
//! Everything is f64. Gradient checks at the tolerances this crate commits
//! to are not feasible in single precision.

use std::cell::{Ref, RefCell};
use std::collections::HashSet;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

/// VJP callback: receives the node's forward data, the gradient flowing
/// into the node, and the parent handles to accumulate into.
pub(crate) type BackwardFn = Box<dyn Fn(&[f64], &[f64], &[Tensor])>;

struct Inner {
    id: u64,
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    /// True if this node is a parameter or depends on one; only tracked
    /// nodes receive gradients.
    tracked: bool,
    parents: Vec<Tensor>,
    backward: Option<BackwardFn>,
}

#[derive(Clone)]
pub struct Tensor {
    inner: Rc<RefCell<Inner>>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let inner = self.inner.borrow();
        f.debug_struct("Tensor")
            .field("id", &inner.id)
            .field("shape", &inner.shape)
            .field("requires_grad", &inner.requires_grad)
            .finish()
    }
}

impl Tensor {
    fn new(shape: Vec<usize>, data: Vec<f64>, requires_grad: bool) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            inner: Rc::new(RefCell::new(Inner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data,
                grad: None,
                requires_grad,
                tracked: requires_grad,
                parents: Vec::new(),
                backward: None,
            })),
        }
    }

    /// Constant (non-differentiable) tensor.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::InvalidArgument(format!(
                "data length {} does not match shape {:?}",
                data.len(),
                shape
            )));
        }
        Ok(Tensor::new(shape.to_vec(), data, false))
    }

    /// Trainable parameter; gradients accumulate here.
    pub fn param(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::InvalidArgument(format!(
                "data length {} does not match shape {:?}",
                data.len(),
                shape
            )));
        }
        Ok(Tensor::new(shape.to_vec(), data, true))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor::new(shape.to_vec(), vec![0.0; shape.iter().product()], false)
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::new(vec![1], vec![v], false)
    }

    /// Internal: result of an op, with parents and a VJP.
    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<f64>,
        parents: Vec<Tensor>,
        backward: BackwardFn,
    ) -> Self {
        let tracked = parents.iter().any(|p| p.tracked());
        let t = Tensor::new(shape, data, false);
        if tracked {
            let mut inner = t.inner.borrow_mut();
            inner.tracked = true;
            inner.parents = parents;
            inner.backward = Some(backward);
        }
        t
    }

    pub fn id(&self) -> u64 {
        self.inner.borrow().id
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.borrow().shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.inner.borrow().data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.borrow().requires_grad
    }

    pub(crate) fn tracked(&self) -> bool {
        self.inner.borrow().tracked
    }

    /// Borrow the forward data.
    pub fn data(&self) -> Ref<'_, [f64]> {
        Ref::map(self.inner.borrow(), |i| i.data.as_slice())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.inner.borrow().data.clone()
    }

    /// Value of a scalar tensor.
    pub fn item(&self) -> Result<f64> {
        let inner = self.inner.borrow();
        if inner.data.len() != 1 {
            return Err(Error::InvalidArgument(format!(
                "item() on tensor of shape {:?}",
                inner.shape
            )));
        }
        Ok(inner.data[0])
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.borrow().grad.clone()
    }

    pub fn zero_grad(&self) {
        self.inner.borrow_mut().grad = None;
    }

    /// Replace the forward data in place (optimizer updates).
    pub fn set_data(&self, data: Vec<f64>) -> Result<()> {
        let mut inner = self.inner.borrow_mut();
        if data.len() != inner.data.len() {
            return Err(Error::InvalidArgument(format!(
                "set_data length {} does not match shape {:?}",
                data.len(),
                inner.shape
            )));
        }
        inner.data = data;
        Ok(())
    }

    pub(crate) fn accumulate_grad(&self, g: &[f64]) {
        let mut inner = self.inner.borrow_mut();
        if !inner.tracked {
            return;
        }
        let len = inner.data.len();
        debug_assert_eq!(g.len(), len);
        let grad = inner.grad.get_or_insert_with(|| vec![0.0; len]);
        for (dst, src) in grad.iter_mut().zip(g) {
            *dst += src;
        }
    }

    /// Reverse-mode pass from a scalar loss. Gradients accumulate into
    /// every tracked node reachable from this one.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::InvalidArgument(format!(
                "backward() requires a scalar, got shape {:?}",
                self.shape()
            )));
        }
        self.accumulate_grad_seed();
        let order = topo_order(self);
        for node in order.iter().rev() {
            let inner = node.inner.borrow();
            let (Some(backward), Some(grad)) = (&inner.backward, &inner.grad) else {
                continue;
            };
            backward(&inner.data, grad, &inner.parents);
        }
        Ok(())
    }

    fn accumulate_grad_seed(&self) {
        let mut inner = self.inner.borrow_mut();
        let len = inner.data.len();
        let grad = inner.grad.get_or_insert_with(|| vec![0.0; len]);
        grad[0] += 1.0;
    }

    pub(crate) fn parents(&self) -> Vec<Tensor> {
        self.inner.borrow().parents.clone()
    }
}

/// Post-order DFS over parent edges; reversing the result yields a
/// topological order with consumers before producers.
fn topo_order(root: &Tensor) -> Vec<Tensor> {
    let mut out = Vec::new();
    let mut visited: HashSet<u64> = HashSet::new();
    let mut stack: Vec<(Tensor, bool)> = vec![(root.clone(), false)];
    while let Some((node, expanded)) = stack.pop() {
        if expanded {
            out.push(node);
            continue;
        }
        if !visited.insert(node.id()) {
            continue;
        }
        stack.push((node.clone(), true));
        for parent in node.parents() {
            if parent.tracked() && !visited.contains(&parent.id()) {
                stack.push((parent, false));
            }
        }
    }
    out
}
