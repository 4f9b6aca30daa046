//! Dense n-dimensional arrays with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] owns a contiguous row-major buffer plus an optional record
//! of the operation that produced it. Running an op under grad mode (the
//! default) links the result to its inputs; [`Tensor::backward`] on a
//! scalar walks that graph once in reverse topological order, accumulates
//! gradients into every participating tensor, and consumes the recorded
//! operations. The tape is rebuilt on the next forward pass.
//!
//! Element type is selectable between f32 (training) and f64 (the
//! gradient-check suite; central differences are unreliable at f32).
//!
//! Tensors are `Rc`-backed handles and are confined to one thread for the
//! duration of a forward/backward episode. Plain buffers intended to cross
//! threads (dataset storage, checkpoints) live outside `Tensor` as raw
//! `Vec<E>` plus shape metadata; see [`io`] for the serialized form.

mod autodiff;
mod conv;
mod gradcheck;
pub mod io;
mod ops;

use std::cell::{Ref, RefCell};
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

pub use autodiff::{backward, no_grad};
pub use conv::{conv2d_output_extent, conv_transpose2d_output_extent};
pub use gradcheck::grad_check;

use crate::error::{Error, Result};
use autodiff::Op;

/// Element type of a tensor buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Dtype {
    #[serde(rename = "f32")]
    F32,
    #[serde(rename = "f64")]
    F64,
}

impl Dtype {
    pub fn as_str(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
        }
    }

    pub fn size_bytes(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// Scalar types a [`Tensor`] can hold.
pub trait Element:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + Send
    + Sync
    + 'static
{
    const DTYPE: Dtype;

    fn of_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn append_le_bytes(self, out: &mut Vec<u8>);
    fn read_le_bytes(bytes: &[u8]) -> Self;
}

impl Element for f32 {
    const DTYPE: Dtype = Dtype::F32;

    fn of_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn append_le_bytes(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le_bytes(bytes: &[u8]) -> Self {
        f32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]])
    }
}

impl Element for f64 {
    const DTYPE: Dtype = Dtype::F64;

    fn of_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn append_le_bytes(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le_bytes(bytes: &[u8]) -> Self {
        f64::from_le_bytes([
            bytes[0], bytes[1], bytes[2], bytes[3], bytes[4], bytes[5], bytes[6], bytes[7],
        ])
    }
}

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

struct Inner<E: Element> {
    id: u64,
    shape: Vec<usize>,
    data: RefCell<Vec<E>>,
    grad: RefCell<Option<Vec<E>>>,
    requires_grad: bool,
    op: RefCell<Option<Op<E>>>,
}

/// A dense row-major array participating in the autodiff graph.
///
/// Cloning a `Tensor` clones the handle, not the buffer.
pub struct Tensor<E: Element> {
    inner: Rc<Inner<E>>,
}

impl<E: Element> Clone for Tensor<E> {
    fn clone(&self) -> Self {
        Tensor {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<E: Element> std::fmt::Debug for Tensor<E> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Tensor(id={}, shape={:?}, dtype={}, requires_grad={})",
            self.inner.id,
            self.inner.shape,
            E::DTYPE.as_str(),
            self.inner.requires_grad
        )
    }
}

impl<E: Element> Tensor<E> {
    fn new(data: Vec<E>, shape: Vec<usize>, requires_grad: bool, op: Option<Op<E>>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            inner: Rc::new(Inner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data: RefCell::new(data),
                grad: RefCell::new(None),
                requires_grad,
                op: RefCell::new(op),
            }),
        }
    }

    pub(crate) fn from_op(data: Vec<E>, shape: Vec<usize>, op: Op<E>) -> Self {
        if autodiff::grad_enabled() && op.inputs().iter().any(|t| t.participates()) {
            Tensor::new(data, shape, false, Some(op))
        } else {
            Tensor::new(data, shape, false, None)
        }
    }

    /// Plain data tensor. Errors when the buffer length does not match the
    /// shape product.
    pub fn from_vec(data: Vec<E>, shape: &[usize]) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::contract(format!(
                "tensor shape {:?} implies {} elements, buffer has {}",
                shape,
                numel,
                data.len()
            )));
        }
        Ok(Tensor::new(data, shape.to_vec(), false, None))
    }

    /// Trainable leaf: like [`Tensor::from_vec`] but marked to receive a
    /// gradient during backward.
    pub fn param(data: Vec<E>, shape: &[usize]) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::contract(format!(
                "tensor shape {:?} implies {} elements, buffer has {}",
                shape,
                numel,
                data.len()
            )));
        }
        Ok(Tensor::new(data, shape.to_vec(), true, None))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Tensor::new(vec![E::zero(); numel], shape.to_vec(), false, None)
    }

    pub fn full(shape: &[usize], value: E) -> Self {
        let numel = shape.iter().product();
        Tensor::new(vec![value; numel], shape.to_vec(), false, None)
    }

    pub fn scalar(value: E) -> Self {
        Tensor::new(vec![value], vec![1], false, None)
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn numel(&self) -> usize {
        self.inner.shape.iter().product()
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    /// True when this tensor either wants a gradient itself or was produced
    /// by an op whose inputs do.
    pub(crate) fn participates(&self) -> bool {
        self.inner.requires_grad || self.inner.op.borrow().is_some()
    }

    pub(crate) fn has_op(&self) -> bool {
        self.inner.op.borrow().is_some()
    }

    pub(crate) fn take_op(&self) -> Option<Op<E>> {
        self.inner.op.borrow_mut().take()
    }

    pub(crate) fn op_inputs(&self) -> Vec<Tensor<E>> {
        match &*self.inner.op.borrow() {
            Some(op) => op.inputs(),
            None => Vec::new(),
        }
    }

    /// Borrow the value buffer.
    pub fn data(&self) -> Ref<'_, Vec<E>> {
        self.inner.data.borrow()
    }

    pub fn to_vec(&self) -> Vec<E> {
        self.inner.data.borrow().clone()
    }

    /// Value of a single-element tensor.
    ///
    /// Panics when `numel() != 1`; this is an internal programming error,
    /// not a recoverable condition.
    pub fn item(&self) -> E {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape());
        self.inner.data.borrow()[0]
    }

    pub fn grad(&self) -> Option<Vec<E>> {
        self.inner.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    pub(crate) fn accumulate_grad(&self, delta: &[E]) {
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(delta) {
                    *gi = *gi + *di;
                }
            }
            None => *slot = Some(delta.to_vec()),
        }
    }

    /// Copy of the values with no graph attachment.
    pub fn detach(&self) -> Tensor<E> {
        Tensor::new(self.to_vec(), self.inner.shape.to_vec(), false, None)
    }

    /// In-place update of the value buffer (optimizer steps). The shape is
    /// fixed for the lifetime of the tensor.
    pub fn update_data(&self, f: impl FnOnce(&mut [E])) {
        f(&mut self.inner.data.borrow_mut());
    }

    /// Replace the buffer wholesale (checkpoint loading).
    pub fn set_data(&self, values: Vec<E>) -> Result<()> {
        if values.len() != self.numel() {
            return Err(Error::contract(format!(
                "set_data: buffer of {} elements into tensor of shape {:?}",
                values.len(),
                self.shape()
            )));
        }
        *self.inner.data.borrow_mut() = values;
        Ok(())
    }

    /// Backpropagate from this scalar through the recorded graph.
    pub fn backward(&self) -> Result<()> {
        autodiff::backward(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_shape_product() {
        let err = Tensor::<f32>::from_vec(vec![1.0, 2.0, 3.0], &[2, 2]).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
        let ok = Tensor::<f32>::from_vec(vec![1.0; 6], &[2, 3]).unwrap();
        assert_eq!(ok.numel(), 6);
    }

    #[test]
    fn detach_drops_graph() {
        let x = Tensor::<f64>::param(vec![2.0], &[1]).unwrap();
        let y = x.square().unwrap();
        assert!(y.has_op());
        let d = y.detach();
        assert!(!d.has_op() && !d.requires_grad());
        assert_eq!(d.to_vec(), vec![4.0]);
    }

    #[test]
    fn item_reads_scalars() {
        assert_eq!(Tensor::<f32>::scalar(5.0).item(), 5.0);
    }
}
