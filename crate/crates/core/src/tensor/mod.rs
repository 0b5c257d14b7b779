//! Minimal reverse-mode autodiff over dense row-major tensors.
//!
//! A [`Tape`] records every operation as a node in a flat Wengert list;
//! [`Tensor`] is a lightweight handle (tape reference + node id) whose value
//! and gradient live inside the tape. Parents always have smaller node ids
//! than children, so [`Tape::backward`] is a single reverse sweep.
//!
//! Training runs in `f32`; gradient-check tests instantiate the same ops in
//! `f64`, where central finite differences are meaningful.

mod conv;
mod ops;

pub use conv::{col2im, im2col};

use std::cell::{Cell, Ref, RefCell};

use crate::error::{Error, Result};

/// Element types the tape can operate on (`f32` for training, `f64` for
/// gradient checks). Supplies the GEMM kernel used by dense and conv ops.
pub trait Scalar:
    num_traits::Float
    + num_traits::NumAssign
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    /// `c = alpha * a @ b + beta * c` for row-major slices, with optional
    /// transposition of either operand. `a` is `m x k` (after transposition),
    /// `b` is `k x n`, `c` is `m x n`.
    fn gemm(
        trans_a: bool,
        trans_b: bool,
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        b: &[Self],
        beta: Self,
        c: &mut [Self],
    );

    fn from_f64(x: f64) -> Self {
        num_traits::NumCast::from(x).expect("finite f64 converts to scalar")
    }

    fn to_f64(self) -> f64 {
        num_traits::NumCast::from(self).expect("scalar converts to f64")
    }
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            fn gemm(
                trans_a: bool,
                trans_b: bool,
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                b: &[Self],
                beta: Self,
                c: &mut [Self],
            ) {
                assert_eq!(a.len(), m * k, "gemm: lhs buffer length");
                assert_eq!(b.len(), k * n, "gemm: rhs buffer length");
                assert_eq!(c.len(), m * n, "gemm: out buffer length");
                let (rsa, csa) = if trans_a {
                    (1isize, m as isize)
                } else {
                    (k as isize, 1isize)
                };
                let (rsb, csb) = if trans_b {
                    (1isize, k as isize)
                } else {
                    (n as isize, 1isize)
                };
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

/// How a node was produced; stores parent ids plus whatever context the
/// backward rule needs.
#[derive(Debug, Clone)]
pub(crate) enum Op<T: Scalar> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    Exp(usize),
    SqrtEps(usize, T),
    Relu(usize),
    Sigmoid(usize),
    SumAll(usize),
    SumRows(usize),
    Reshape(usize),
    Dense {
        input: usize,
        weight: usize,
        bias: usize,
    },
    Conv2d {
        input: usize,
        kernel: usize,
        bias: usize,
        stride: usize,
        pad: usize,
    },
    Upsample2(usize),
    Downsample2(usize),
    Crop2d {
        input: usize,
        top: usize,
        left: usize,
    },
    Bce {
        pred: usize,
        target: usize,
        clip: T,
    },
    KlUnitNormal {
        mu: usize,
        log_var: usize,
    },
    Contrastive {
        dist: usize,
        labels: Vec<T>,
        margin: T,
    },
}

pub(crate) struct Node<T: Scalar> {
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Option<Vec<T>>,
    /// True for leaves created with `requires_grad` and for any node with a
    /// participating parent; gradient is propagated into (and retained on)
    /// exactly these nodes.
    pub needs_grad: bool,
    pub op: Op<T>,
}

/// Gradient tape. One per forward/backward pass; drop and rebuild per step.
pub struct Tape<T: Scalar> {
    pub(crate) nodes: RefCell<Vec<Node<T>>>,
    backward_done: Cell<bool>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            backward_done: Cell::new(false),
        }
    }

    /// Number of nodes recorded so far.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Record an input tensor. `requires_grad` marks it as a differentiation
    /// target for [`Tape::backward`].
    pub fn leaf(&self, shape: &[usize], data: Vec<T>, requires_grad: bool) -> Result<Tensor<'_, T>> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Shape(format!(
                "leaf data length {} does not match shape {:?} ({} elements)",
                data.len(),
                shape,
                numel
            )));
        }
        Ok(self.push(shape.to_vec(), data, requires_grad, Op::Leaf))
    }

    /// Convenience: a leaf that never receives gradient (inputs, targets).
    pub fn constant(&self, shape: &[usize], data: Vec<T>) -> Result<Tensor<'_, T>> {
        self.leaf(shape, data, false)
    }

    pub(crate) fn push(
        &self,
        shape: Vec<usize>,
        value: Vec<T>,
        needs_grad: bool,
        op: Op<T>,
    ) -> Tensor<'_, T> {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            shape: shape.clone(),
            value,
            grad: None,
            needs_grad,
            op,
        });
        Tensor {
            tape: self,
            id,
            shape,
        }
    }

    pub(crate) fn node_needs_grad(&self, id: usize) -> bool {
        self.nodes.borrow()[id].needs_grad
    }

    /// Reverse sweep from a scalar loss. Populates `grad` on every
    /// participating node. A second call on the same tape is rejected.
    pub fn backward(&self, loss: &Tensor<'_, T>) -> Result<()> {
        if self.backward_done.get() {
            return Err(Error::BackwardAlreadyRun);
        }
        {
            let nodes = self.nodes.borrow();
            let loss_node = &nodes[loss.id];
            if loss_node.value.len() != 1 {
                return Err(Error::NonScalarLoss(loss_node.shape.clone()));
            }
        }
        self.backward_done.set(true);

        let mut nodes = self.nodes.borrow_mut();
        let mut grads: Vec<Option<Vec<T>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(vec![T::one()]);

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            if !nodes[id].needs_grad {
                continue;
            }
            ops::propagate(&nodes[..], id, &g, &mut grads);
            nodes[id].grad = Some(g);
        }
        Ok(())
    }
}

/// Handle to a tape node. Cheap to clone; the value lives in the tape.
#[derive(Clone)]
pub struct Tensor<'t, T: Scalar> {
    pub(crate) tape: &'t Tape<T>,
    pub(crate) id: usize,
    shape: Vec<usize>,
}

impl<'t, T: Scalar> Tensor<'t, T> {
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    /// Borrow the forward value.
    pub fn value(&self) -> Ref<'_, [T]> {
        Ref::map(self.tape.nodes.borrow(), |n| n[self.id].value.as_slice())
    }

    /// Copy the forward value out.
    pub fn to_vec(&self) -> Vec<T> {
        self.value().to_vec()
    }

    /// The scalar value of a single-element tensor.
    pub fn item(&self) -> T {
        let v = self.value();
        assert_eq!(v.len(), 1, "item() on non-scalar tensor");
        v[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.node_needs_grad(self.id)
    }

    /// Gradient populated by [`Tape::backward`], if any.
    pub fn grad(&self) -> Option<Vec<T>> {
        self.tape.nodes.borrow()[self.id].grad.clone()
    }
}
