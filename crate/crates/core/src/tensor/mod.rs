//! Dense N-D tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is a cheap handle to a shared node. Operations on tensors
//! that require gradients record a [`GradFn`] linking the result to its
//! inputs; [`Tensor::backward`] walks that graph once in reverse
//! topological order and accumulates gradients into every reachable node.
//! Feature maps use N,C,H,W layout throughout.

mod scalar;

use std::cell::Cell;
use std::collections::HashSet;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, MutexGuard, RwLock, RwLockReadGuard, RwLockWriteGuard};

pub use scalar::{Precision, Scalar};

use crate::error::{dim_err, Error, Result};

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Runs `f` without recording any graph, e.g. for evaluation.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            GRAD_ENABLED.with(|g| g.set(self.0));
        }
    }
    let _restore = Restore(GRAD_ENABLED.with(|g| g.replace(false)));
    f()
}

pub fn grad_enabled() -> bool {
    GRAD_ENABLED.with(Cell::get)
}

/// Backward rule of a recorded operation.
///
/// `backward` receives the gradient of the loss with respect to the
/// operation's output and returns one entry per input (in the order of
/// [`GradFn::inputs`]); `None` means the input needs no gradient.
pub trait GradFn<T: Scalar>: Send + Sync {
    fn name(&self) -> &'static str;
    fn inputs(&self) -> Vec<Tensor<T>>;
    fn backward(&self, out: &Tensor<T>, grad: &[T]) -> Vec<Option<Vec<T>>>;
}

struct Node<T: Scalar> {
    id: u64,
    shape: Vec<usize>,
    data: RwLock<Vec<T>>,
    grad: Mutex<Option<Vec<T>>>,
    requires_grad: bool,
    grad_fn: Mutex<Option<Box<dyn GradFn<T>>>>,
}

/// Handle to a node of the computation graph.
pub struct Tensor<T: Scalar>(Arc<Node<T>>);

impl<T: Scalar> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor(Arc::clone(&self.0))
    }
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let data = self.data();
        let head: Vec<T> = data.iter().take(8).copied().collect();
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .field("head", &head)
            .finish()
    }
}

pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Scalar> Tensor<T> {
    fn build(
        shape: Vec<usize>,
        data: Vec<T>,
        requires_grad: bool,
        grad_fn: Option<Box<dyn GradFn<T>>>,
    ) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        Tensor(Arc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            data: RwLock::new(data),
            grad: Mutex::new(None),
            requires_grad,
            grad_fn: Mutex::new(grad_fn),
        }))
    }

    /// Constant (non-differentiable) tensor.
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(dim_err(
                "from_vec",
                format!("shape {shape:?} needs {} values, got {}", numel(shape), data.len()),
            ));
        }
        Ok(Self::build(shape.to_vec(), data, false, None))
    }

    /// Leaf tensor that accumulates gradients.
    pub fn leaf(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let t = Self::from_vec(shape, data)?;
        Ok(Self::build(t.0.shape.clone(), t.into_vec(), true, None))
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::from_vec(shape, data.iter().map(|&v| T::of(v)).collect())
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::build(shape.to_vec(), vec![T::zero(); numel(shape)], false, None)
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Self::build(shape.to_vec(), vec![value; numel(shape)], false, None)
    }

    pub fn scalar(value: T) -> Self {
        Self::build(Vec::new(), vec![value], false, None)
    }

    /// Result of an operation. The graph link is kept only when gradients
    /// are enabled and some input requires them.
    pub fn from_op(shape: Vec<usize>, data: Vec<T>, grad_fn: Box<dyn GradFn<T>>) -> Self {
        let needs = grad_enabled() && grad_fn.inputs().iter().any(Tensor::requires_grad);
        if needs {
            Self::build(shape, data, true, Some(grad_fn))
        } else {
            Self::build(shape, data, false, None)
        }
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn numel(&self) -> usize {
        numel(&self.0.shape)
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.grad_fn.lock().is_none()
    }

    pub fn data(&self) -> RwLockReadGuard<'_, Vec<T>> {
        self.0.data.read()
    }

    /// Mutable access to the values, used for in-place parameter updates.
    pub fn data_mut(&self) -> RwLockWriteGuard<'_, Vec<T>> {
        self.0.data.write()
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.data().clone()
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data().iter().map(|v| v.as_f64()).collect()
    }

    fn into_vec(self) -> Vec<T> {
        match Arc::try_unwrap(self.0) {
            Ok(node) => node.data.into_inner(),
            Err(shared) => shared.data.read().clone(),
        }
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> T {
        self.data()[0]
    }

    pub fn grad(&self) -> Option<Vec<T>> {
        self.0.grad.lock().clone()
    }

    pub fn grad_mut(&self) -> MutexGuard<'_, Option<Vec<T>>> {
        self.0.grad.lock()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.lock() = None;
    }

    /// Copy of the values with no graph linkage.
    pub fn detach(&self) -> Self {
        Self::build(self.0.shape.clone(), self.to_vec(), false, None)
    }

    pub fn op_name(&self) -> Option<&'static str> {
        self.0.grad_fn.lock().as_ref().map(|g| g.name())
    }

    /// Same values viewed under another shape of equal element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        if numel(shape) != self.numel() {
            return Err(dim_err(
                "reshape",
                format!("{:?} -> {shape:?}", self.shape()),
            ));
        }
        Ok(Self::from_op(
            shape.to_vec(),
            self.to_vec(),
            Box::new(ReshapeBackward {
                input: self.clone(),
            }),
        ))
    }

    fn accumulate_grad(&self, g: Vec<T>) {
        let mut slot = self.0.grad.lock();
        match slot.as_mut() {
            Some(acc) => {
                for (a, b) in acc.iter_mut().zip(g) {
                    *a += b;
                }
            }
            None => *slot = Some(g),
        }
    }

    /// Reverse-mode differentiation from a scalar root.
    ///
    /// Gradients are summed into the `grad` slot of every reachable tensor
    /// that requires them; fan-out contributions add up. The recorded
    /// backward rules of interior nodes are released afterwards, so a graph
    /// can be differentiated once.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar root, got shape {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Err(Error::Usage(
                "backward called on a tensor that does not require grad".into(),
            ));
        }
        let order = self.topological_order();
        self.accumulate_grad(vec![T::one()]);
        for node in order.iter().rev() {
            let Some(grad_fn) = node.0.grad_fn.lock().take() else {
                continue;
            };
            let Some(grad) = node.0.grad.lock().clone() else {
                continue;
            };
            let inputs = grad_fn.inputs();
            let grads = grad_fn.backward(node, &grad);
            debug_assert_eq!(inputs.len(), grads.len(), "{}", grad_fn.name());
            for (input, g) in inputs.iter().zip(grads) {
                if let Some(g) = g {
                    if input.requires_grad() {
                        debug_assert_eq!(g.len(), input.numel(), "{}", grad_fn.name());
                        input.accumulate_grad(g);
                    }
                }
            }
        }
        Ok(())
    }

    /// Nodes reachable from `self` in topological order (inputs first).
    fn topological_order(&self) -> Vec<Tensor<T>> {
        let mut visited = HashSet::new();
        let mut order = Vec::new();
        let mut stack: Vec<(Tensor<T>, bool)> = vec![(self.clone(), false)];
        while let Some((node, expanded)) = stack.pop() {
            if expanded {
                order.push(node);
                continue;
            }
            if !visited.insert(node.id()) {
                continue;
            }
            let inputs = node
                .0
                .grad_fn
                .lock()
                .as_ref()
                .map(|g| g.inputs())
                .unwrap_or_default();
            stack.push((node, true));
            for input in inputs {
                if input.requires_grad() && !visited.contains(&input.id()) {
                    stack.push((input, false));
                }
            }
        }
        order
    }
}

struct ReshapeBackward<T: Scalar> {
    input: Tensor<T>,
}

impl<T: Scalar> GradFn<T> for ReshapeBackward<T> {
    fn name(&self) -> &'static str {
        "reshape"
    }
    fn inputs(&self) -> Vec<Tensor<T>> {
        vec![self.input.clone()]
    }
    fn backward(&self, _out: &Tensor<T>, grad: &[T]) -> Vec<Option<Vec<T>>> {
        vec![Some(grad.to_vec())]
    }
}

/// A named trainable tensor.
#[derive(Clone, Debug)]
pub struct Parameter<T: Scalar> {
    pub name: String,
    pub tensor: Tensor<T>,
}

impl<T: Scalar> Parameter<T> {
    pub fn new(name: impl Into<String>, shape: &[usize], data: Vec<T>) -> Result<Self> {
        Ok(Parameter {
            name: name.into(),
            tensor: Tensor::leaf(shape, data)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops;

    #[test]
    fn leaf_shape_must_match() {
        assert!(Tensor::<f64>::leaf(&[2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn backward_needs_scalar_root() {
        let x = Tensor::<f64>::leaf(&[3], vec![1.0, 2.0, 3.0]).unwrap();
        let y = ops::relu(&x);
        assert!(matches!(y.backward(), Err(Error::Usage(_))));
    }

    #[test]
    fn sum_gives_ones() {
        let x = Tensor::<f64>::leaf(&[2, 2], vec![1.0, -2.0, 3.0, 0.5]).unwrap();
        ops::sum(&x).backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn sum_of_squares_gives_twice_x() {
        let x = Tensor::<f64>::leaf(&[3], vec![1.0, -2.0, 3.0]).unwrap();
        let y = ops::mul(&x, &x).unwrap();
        ops::sum(&y).backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, -4.0, 6.0]);
    }

    #[test]
    fn fan_out_accumulates() {
        let x = Tensor::<f64>::leaf(&[4], vec![0.3; 4]).unwrap();
        let loss = ops::add(&ops::sum(&x), &ops::sum(&x)).unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0; 4]);
    }

    #[test]
    fn diamond_graph_visits_each_node_once() {
        // y = relu(x); z = y + y; loss = sum(z) -> grad 2 where x > 0
        let x = Tensor::<f64>::leaf(&[3], vec![-1.0, 0.5, 2.0]).unwrap();
        let y = ops::relu(&x);
        let z = ops::add(&y, &y).unwrap();
        ops::sum(&z).backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![0.0, 2.0, 2.0]);
    }

    #[test]
    fn no_grad_skips_graph() {
        let x = Tensor::<f32>::leaf(&[2], vec![1.0, 2.0]).unwrap();
        let y = no_grad(|| ops::relu(&x));
        assert!(!y.requires_grad());
        assert!(grad_enabled());
    }

    #[test]
    fn reshape_passes_gradient_through() {
        let x = Tensor::<f64>::leaf(&[2, 3], (0..6).map(f64::from).collect()).unwrap();
        let y = x.reshape(&[3, 2]).unwrap();
        assert_eq!(y.shape(), &[3, 2]);
        ops::sum(&ops::mul(&y, &y).unwrap()).backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
    }
}
