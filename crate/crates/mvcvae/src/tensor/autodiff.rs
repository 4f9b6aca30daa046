//! Reverse-mode differentiation over the recorded op graph.
//!
//! Each op-produced tensor holds an [`Op`] naming its inputs; the graph is
//! therefore a DAG rooted at the loss. [`backward`] seeds the loss with 1,
//! walks the DAG once in reverse topological order (each node visited
//! exactly once, gradients accumulating across multiple uses), and takes
//! each [`Op`] out of its tensor as it goes — the tape is consumed by the
//! pass and a fresh forward is needed before differentiating again.

use std::cell::Cell;
use std::collections::HashSet;

use super::conv::{conv_backward, conv_bias_grad, conv_transpose_backward};
use super::ops::reduce_grad_to_shape;
use super::{Element, Tensor};
use crate::error::{Error, Result};

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Run `f` without recording ops; used for inference and finite-difference
/// probes where graph construction is pure overhead.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    let prev = GRAD_ENABLED.with(|g| g.replace(false));
    let out = f();
    GRAD_ENABLED.with(|g| g.set(prev));
    out
}

pub(crate) fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

/// Recorded producing operation of a tensor.
pub(crate) enum Op<E: Element> {
    Add(Tensor<E>, Tensor<E>),
    Sub(Tensor<E>, Tensor<E>),
    Mul(Tensor<E>, Tensor<E>),
    Neg(Tensor<E>),
    Exp { input: Tensor<E>, output: Vec<E> },
    Log(Tensor<E>),
    Square(Tensor<E>),
    Abs(Tensor<E>),
    Scale(Tensor<E>, E),
    Clamp { input: Tensor<E>, lo: E, hi: E },
    Relu(Tensor<E>),
    LeakyRelu(Tensor<E>, E),
    Sigmoid { input: Tensor<E>, output: Vec<E> },
    Matmul { a: Tensor<E>, b: Tensor<E> },
    Conv2d {
        input: Tensor<E>,
        weight: Tensor<E>,
        bias: Tensor<E>,
        stride: usize,
        pad: usize,
        /// im2col matrix cached by the forward pass.
        cols: Vec<E>,
    },
    ConvTranspose2d { input: Tensor<E>, weight: Tensor<E>, bias: Tensor<E>, stride: usize, pad: usize },
    Sum(Tensor<E>),
    Mean(Tensor<E>),
    SumAxis { input: Tensor<E>, axis: usize },
    Reshape(Tensor<E>),
    Concat { a: Tensor<E>, b: Tensor<E>, axis: usize },
}

impl<E: Element> Op<E> {
    pub(crate) fn inputs(&self) -> Vec<Tensor<E>> {
        match self {
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![a.clone(), b.clone()],
            Op::Neg(x)
            | Op::Log(x)
            | Op::Square(x)
            | Op::Abs(x)
            | Op::Scale(x, _)
            | Op::Relu(x)
            | Op::LeakyRelu(x, _)
            | Op::Sum(x)
            | Op::Mean(x)
            | Op::Reshape(x) => vec![x.clone()],
            Op::Exp { input, .. } | Op::Sigmoid { input, .. } => vec![input.clone()],
            Op::Clamp { input, .. } | Op::SumAxis { input, .. } => vec![input.clone()],
            Op::Matmul { a, b } => vec![a.clone(), b.clone()],
            Op::Conv2d { input, weight, bias, .. }
            | Op::ConvTranspose2d { input, weight, bias, .. } => {
                vec![input.clone(), weight.clone(), bias.clone()]
            }
            Op::Concat { a, b, .. } => vec![a.clone(), b.clone()],
        }
    }

    /// Push `grad` (gradient of the loss w.r.t. this op's output, shaped
    /// `out_shape`) into the op's participating inputs.
    fn propagate(&self, grad: &[E], out_shape: &[usize]) {
        match self {
            Op::Add(a, b) => {
                feed_broadcast(a, grad, out_shape);
                feed_broadcast(b, grad, out_shape);
            }
            Op::Sub(a, b) => {
                feed_broadcast(a, grad, out_shape);
                if b.participates() {
                    let neg: Vec<E> = grad.iter().map(|&g| -g).collect();
                    feed_broadcast_owned(b, neg, out_shape);
                }
            }
            Op::Mul(a, b) => {
                if a.participates() {
                    let other = broadcast_values(b, out_shape);
                    let d: Vec<E> = grad.iter().zip(&other).map(|(&g, &o)| g * o).collect();
                    feed_broadcast_owned(a, d, out_shape);
                }
                if b.participates() {
                    let other = broadcast_values(a, out_shape);
                    let d: Vec<E> = grad.iter().zip(&other).map(|(&g, &o)| g * o).collect();
                    feed_broadcast_owned(b, d, out_shape);
                }
            }
            Op::Neg(x) => feed_map(x, grad, |g, _| -g),
            Op::Exp { input, output } => {
                if input.participates() {
                    let d: Vec<E> = grad.iter().zip(output).map(|(&g, &y)| g * y).collect();
                    input.accumulate_grad(&d);
                }
            }
            Op::Log(x) => feed_map(x, grad, |g, v| g / v),
            Op::Square(x) => {
                let two = E::of_f64(2.0);
                feed_map(x, grad, move |g, v| g * two * v);
            }
            // d|x|/dx is sign(x) with the subgradient at 0 defined as 0.
            Op::Abs(x) => feed_map(x, grad, |g, v| {
                if v > E::zero() {
                    g
                } else if v < E::zero() {
                    -g
                } else {
                    E::zero()
                }
            }),
            Op::Scale(x, k) => {
                let k = *k;
                feed_map(x, grad, move |g, _| g * k);
            }
            Op::Clamp { input, lo, hi } => {
                let (lo, hi) = (*lo, *hi);
                feed_map(input, grad, move |g, v| {
                    if v >= lo && v <= hi {
                        g
                    } else {
                        E::zero()
                    }
                });
            }
            Op::Relu(x) => feed_map(x, grad, |g, v| if v > E::zero() { g } else { E::zero() }),
            Op::LeakyRelu(x, slope) => {
                let s = *slope;
                feed_map(x, grad, move |g, v| if v > E::zero() { g } else { g * s });
            }
            Op::Sigmoid { input, output } => {
                if input.participates() {
                    let one = E::one();
                    let d: Vec<E> = grad
                        .iter()
                        .zip(output)
                        .map(|(&g, &y)| g * y * (one - y))
                        .collect();
                    input.accumulate_grad(&d);
                }
            }
            Op::Matmul { a, b } => {
                let (m, k) = (a.shape()[0], a.shape()[1]);
                let n = b.shape()[1];
                if a.participates() {
                    // dA = dC . B^T
                    let mut da = vec![E::zero(); m * k];
                    super::ops::gemm_abt(m, n, k, grad, &b.data(), &mut da);
                    a.accumulate_grad(&da);
                }
                if b.participates() {
                    // dB = A^T . dC
                    let mut db = vec![E::zero(); k * n];
                    super::ops::gemm_atb(m, k, n, &a.data(), grad, &mut db);
                    b.accumulate_grad(&db);
                }
            }
            Op::Conv2d { input, weight, bias, stride, pad, cols } => {
                let (dx, dw) = conv_backward(
                    &input.data(),
                    input.shape(),
                    &weight.data(),
                    weight.shape(),
                    grad,
                    *stride,
                    *pad,
                    Some(cols),
                    input.participates(),
                    weight.participates(),
                );
                if let Some(d) = dx {
                    input.accumulate_grad(&d);
                }
                if let Some(d) = dw {
                    weight.accumulate_grad(&d);
                }
                if bias.participates() {
                    let d = conv_bias_grad(grad, out_shape);
                    bias.accumulate_grad(&d);
                }
            }
            Op::ConvTranspose2d { input, weight, bias, stride, pad } => {
                // Forward of the transposed conv is the input-gradient of a
                // conv with the same weight; its backward is that conv's
                // forward, with the weight/input roles mirrored accordingly.
                let (dx, dw) = conv_transpose_backward(
                    &input.data(),
                    input.shape(),
                    &weight.data(),
                    weight.shape(),
                    grad,
                    out_shape,
                    *stride,
                    *pad,
                    input.participates(),
                    weight.participates(),
                );
                if let Some(d) = dx {
                    input.accumulate_grad(&d);
                }
                if let Some(d) = dw {
                    weight.accumulate_grad(&d);
                }
                if bias.participates() {
                    let d = conv_bias_grad(grad, out_shape);
                    bias.accumulate_grad(&d);
                }
            }
            Op::Sum(x) => {
                if x.participates() {
                    let d = vec![grad[0]; x.numel()];
                    x.accumulate_grad(&d);
                }
            }
            Op::Mean(x) => {
                if x.participates() {
                    let n = E::from_usize(x.numel()).unwrap();
                    let d = vec![grad[0] / n; x.numel()];
                    x.accumulate_grad(&d);
                }
            }
            Op::SumAxis { input, axis } => {
                if input.participates() {
                    let shape = input.shape();
                    let outer: usize = shape[..*axis].iter().product();
                    let len = shape[*axis];
                    let inner: usize = shape[*axis + 1..].iter().product();
                    let mut d = vec![E::zero(); input.numel()];
                    for o in 0..outer {
                        let g = &grad[o * inner..(o + 1) * inner];
                        for l in 0..len {
                            let dst = &mut d[(o * len + l) * inner..(o * len + l + 1) * inner];
                            dst.copy_from_slice(g);
                        }
                    }
                    input.accumulate_grad(&d);
                }
            }
            Op::Reshape(x) => {
                if x.participates() {
                    x.accumulate_grad(grad);
                }
            }
            Op::Concat { a, b, axis } => {
                let sa = a.shape();
                let sb = b.shape();
                let outer: usize = sa[..*axis].iter().product();
                let inner_a: usize = sa[*axis..].iter().product();
                let inner_b: usize = sb[*axis..].iter().product();
                let step = inner_a + inner_b;
                if a.participates() {
                    let mut d = Vec::with_capacity(outer * inner_a);
                    for o in 0..outer {
                        d.extend_from_slice(&grad[o * step..o * step + inner_a]);
                    }
                    a.accumulate_grad(&d);
                }
                if b.participates() {
                    let mut d = Vec::with_capacity(outer * inner_b);
                    for o in 0..outer {
                        d.extend_from_slice(&grad[o * step + inner_a..(o + 1) * step]);
                    }
                    b.accumulate_grad(&d);
                }
            }
        }
    }
}

fn feed_map<E: Element>(x: &Tensor<E>, grad: &[E], f: impl Fn(E, E) -> E) {
    if x.participates() {
        let data = x.data();
        let d: Vec<E> = grad.iter().zip(data.iter()).map(|(&g, &v)| f(g, v)).collect();
        drop(data);
        x.accumulate_grad(&d);
    }
}

fn feed_broadcast<E: Element>(x: &Tensor<E>, grad: &[E], out_shape: &[usize]) {
    if x.participates() {
        let d = reduce_grad_to_shape(grad, out_shape, x.shape());
        x.accumulate_grad(&d);
    }
}

fn feed_broadcast_owned<E: Element>(x: &Tensor<E>, grad: Vec<E>, out_shape: &[usize]) {
    if x.participates() {
        let d = reduce_grad_to_shape(&grad, out_shape, x.shape());
        x.accumulate_grad(&d);
    }
}

/// Materialize a (possibly smaller) operand at the broadcast output shape.
fn broadcast_values<E: Element>(x: &Tensor<E>, out_shape: &[usize]) -> Vec<E> {
    super::ops::materialize_broadcast(&x.data(), x.shape(), out_shape)
}

/// Reverse-mode pass from a scalar loss.
///
/// Every tensor reachable from `loss` that participates in differentiation
/// has its gradient populated afterwards; recorded ops are consumed.
pub fn backward<E: Element>(loss: &Tensor<E>) -> Result<()> {
    if loss.numel() != 1 {
        return Err(Error::contract(format!(
            "backward requires a scalar loss, got shape {:?}",
            loss.shape()
        )));
    }
    let order = topo_order(loss);
    loss.accumulate_grad(&[E::one()]);
    for node in order.iter().rev() {
        let Some(op) = node.take_op() else { continue };
        let grad = node
            .grad()
            .expect("node in reverse topological order must have received a gradient");
        op.propagate(&grad, node.shape());
    }
    Ok(())
}

/// Post-order DFS over op-produced nodes; `out` ends in topological order
/// (inputs before consumers). Leaves carry no op and are excluded.
fn topo_order<E: Element>(root: &Tensor<E>) -> Vec<Tensor<E>> {
    struct Frame<E: Element> {
        node: Tensor<E>,
        inputs: Vec<Tensor<E>>,
        next: usize,
    }

    let mut order = Vec::new();
    if !root.has_op() {
        return order;
    }
    let mut visited: HashSet<u64> = HashSet::new();
    visited.insert(root.id());
    let mut stack = vec![Frame {
        inputs: root.op_inputs(),
        node: root.clone(),
        next: 0,
    }];
    while let Some(frame) = stack.last_mut() {
        if frame.next < frame.inputs.len() {
            let child = frame.inputs[frame.next].clone();
            frame.next += 1;
            if child.has_op() && visited.insert(child.id()) {
                stack.push(Frame {
                    inputs: child.op_inputs(),
                    node: child,
                    next: 0,
                });
            }
        } else {
            order.push(frame.node.clone());
            stack.pop();
        }
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_gradient() {
        let x = Tensor::<f64>::param(vec![1.0, 2.0, 3.0], &[3]).unwrap();
        let loss = x.square().unwrap().sum();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 4.0, 6.0]);
    }

    #[test]
    fn reuse_accumulates() {
        let x = Tensor::<f64>::param(vec![5.0], &[1]).unwrap();
        let y = x.add(&x).unwrap();
        y.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let x = Tensor::<f64>::param(vec![1.0, 2.0], &[2]).unwrap();
        let y = x.scale(2.0);
        assert!(matches!(y.backward(), Err(Error::Contract(_))));
    }

    #[test]
    fn backward_consumes_tape() {
        let x = Tensor::<f64>::param(vec![3.0], &[1]).unwrap();
        let y = x.square().unwrap();
        assert!(y.has_op());
        y.backward().unwrap();
        assert!(!y.has_op());
    }

    #[test]
    fn backward_is_deterministic() {
        let run = || {
            let x = Tensor::<f64>::param(vec![0.3, -1.2, 2.5, 0.7], &[2, 2]).unwrap();
            let w = Tensor::<f64>::param(vec![1.0, 0.5, -0.25, 2.0], &[2, 2]).unwrap();
            let h = x.matmul(&w).unwrap();
            let z = h.leaky_relu(0.2).exp();
            let loss = z.add(&h).unwrap().mean();
            loss.backward().unwrap();
            (x.grad().unwrap(), w.grad().unwrap())
        };
        let (gx1, gw1) = run();
        let (gx2, gw2) = run();
        assert_eq!(gx1, gx2);
        assert_eq!(gw1, gw2);
    }

    #[test]
    fn no_grad_suppresses_recording() {
        let x = Tensor::<f64>::param(vec![1.0], &[1]).unwrap();
        let y = no_grad(|| x.square().unwrap());
        assert!(!y.has_op());
    }

    #[test]
    fn gradient_does_not_flow_into_constants() {
        let x = Tensor::<f64>::param(vec![2.0], &[1]).unwrap();
        let c = Tensor::<f64>::scalar(3.0);
        let y = x.mul(&c).unwrap().sum();
        y.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![3.0]);
        assert!(c.grad().is_none());
    }
}
