//! Elementwise, matrix, reduction, and shape operations.
//!
//! Binary elementwise ops broadcast with the trailing-dimension rule:
//! shapes are right-aligned and a dimension of extent 1 stretches to match
//! the other operand. Nothing else broadcasts.

use rayon::prelude::*;

use super::autodiff::Op;
use super::{Element, Tensor};
use crate::error::{Error, Result};

/// Broadcast shape of two operands under the trailing-dimension rule, or a
/// contract violation naming both shapes.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let ndim = a.len().max(b.len());
    let mut out = vec![0usize; ndim];
    for i in 0..ndim {
        let ea = if i < ndim - a.len() { 1 } else { a[i - (ndim - a.len())] };
        let eb = if i < ndim - b.len() { 1 } else { b[i - (ndim - b.len())] };
        out[i] = if ea == eb {
            ea
        } else if ea == 1 {
            eb
        } else if eb == 1 {
            ea
        } else {
            return Err(Error::contract(format!(
                "shapes {:?} and {:?} are not broadcastable",
                a, b
            )));
        };
    }
    Ok(out)
}

/// Row-major strides, with stride 0 for broadcast (extent-1) dimensions so
/// the same index arithmetic walks both operands.
fn broadcast_strides(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let ndim = out_shape.len();
    let offset = ndim - shape.len();
    let mut strides = vec![0usize; ndim];
    let mut acc = 1usize;
    for i in (0..shape.len()).rev() {
        strides[offset + i] = if shape[i] == 1 { 0 } else { acc };
        acc *= shape[i];
    }
    strides
}

fn binary_map<E: Element>(
    a: &Tensor<E>,
    b: &Tensor<E>,
    f: impl Fn(E, E) -> E,
) -> Result<(Vec<E>, Vec<usize>)> {
    let out_shape = broadcast_shape(a.shape(), b.shape())?;
    let numel: usize = out_shape.iter().product();
    let da = a.data();
    let db = b.data();
    if a.shape() == b.shape() {
        let out = da.iter().zip(db.iter()).map(|(&x, &y)| f(x, y)).collect();
        return Ok((out, out_shape));
    }
    let sa = broadcast_strides(a.shape(), &out_shape);
    let sb = broadcast_strides(b.shape(), &out_shape);
    let mut out = Vec::with_capacity(numel);
    let mut idx = vec![0usize; out_shape.len()];
    let mut ia = 0usize;
    let mut ib = 0usize;
    for _ in 0..numel {
        out.push(f(da[ia], db[ib]));
        // odometer increment over the output index space
        for d in (0..out_shape.len()).rev() {
            idx[d] += 1;
            ia += sa[d];
            ib += sb[d];
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
            ia -= sa[d] * out_shape[d];
            ib -= sb[d] * out_shape[d];
        }
    }
    Ok((out, out_shape))
}

/// Expand `data` (shaped `shape`) to `out_shape` by repeating stretched
/// dimensions. `out_shape` must be a valid broadcast target of `shape`.
pub(crate) fn materialize_broadcast<E: Element>(
    data: &[E],
    shape: &[usize],
    out_shape: &[usize],
) -> Vec<E> {
    if shape == out_shape {
        return data.to_vec();
    }
    let numel: usize = out_shape.iter().product();
    let strides = broadcast_strides(shape, out_shape);
    let mut out = Vec::with_capacity(numel);
    let mut idx = vec![0usize; out_shape.len()];
    let mut it = 0usize;
    for _ in 0..numel {
        out.push(data[it]);
        for d in (0..out_shape.len()).rev() {
            idx[d] += 1;
            it += strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
            it -= strides[d] * out_shape[d];
        }
    }
    out
}

/// Sum `grad` (shaped `grad_shape`) down to `target_shape` by collapsing the
/// axes that were stretched during broadcasting.
pub(crate) fn reduce_grad_to_shape<E: Element>(
    grad: &[E],
    grad_shape: &[usize],
    target_shape: &[usize],
) -> Vec<E> {
    if grad_shape == target_shape {
        return grad.to_vec();
    }
    let numel: usize = target_shape.iter().product();
    let mut out = vec![E::zero(); numel];
    let strides = broadcast_strides(target_shape, grad_shape);
    let mut idx = vec![0usize; grad_shape.len()];
    let mut it = 0usize;
    for &g in grad {
        out[it] = out[it] + g;
        for d in (0..grad_shape.len()).rev() {
            idx[d] += 1;
            it += strides[d];
            if idx[d] < grad_shape[d] {
                break;
            }
            idx[d] = 0;
            it -= strides[d] * grad_shape[d];
        }
    }
    out
}

fn unary<E: Element>(x: &Tensor<E>, f: impl Fn(E) -> E, op: Op<E>) -> Tensor<E> {
    let data = x.data().iter().map(|&v| f(v)).collect();
    Tensor::from_op(data, x.shape().to_vec(), op)
}

impl<E: Element> Tensor<E> {
    pub fn add(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        let (data, shape) = binary_map(self, other, |a, b| a + b)?;
        Ok(Tensor::from_op(data, shape, Op::Add(self.clone(), other.clone())))
    }

    pub fn sub(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        let (data, shape) = binary_map(self, other, |a, b| a - b)?;
        Ok(Tensor::from_op(data, shape, Op::Sub(self.clone(), other.clone())))
    }

    pub fn mul(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        let (data, shape) = binary_map(self, other, |a, b| a * b)?;
        Ok(Tensor::from_op(data, shape, Op::Mul(self.clone(), other.clone())))
    }

    pub fn neg(&self) -> Tensor<E> {
        unary(self, |v| -v, Op::Neg(self.clone()))
    }

    pub fn exp(&self) -> Tensor<E> {
        let data: Vec<E> = self.data().iter().map(|&v| v.exp()).collect();
        let op = Op::Exp {
            input: self.clone(),
            output: data.clone(),
        };
        Tensor::from_op(data, self.shape().to_vec(), op)
    }

    pub fn log(&self) -> Tensor<E> {
        unary(self, |v| v.ln(), Op::Log(self.clone()))
    }

    pub fn square(&self) -> Result<Tensor<E>> {
        Ok(unary(self, |v| v * v, Op::Square(self.clone())))
    }

    pub fn abs(&self) -> Tensor<E> {
        unary(self, |v| v.abs(), Op::Abs(self.clone()))
    }

    /// Multiply every element by a scalar constant.
    pub fn scale(&self, k: E) -> Tensor<E> {
        unary(self, |v| v * k, Op::Scale(self.clone(), k))
    }

    /// Clamp into `[lo, hi]`. Gradient passes where the input lies inside
    /// the interval (inclusive) and is zero where the clamp engaged.
    pub fn clamp(&self, lo: E, hi: E) -> Tensor<E> {
        unary(
            self,
            |v| if v < lo { lo } else if v > hi { hi } else { v },
            Op::Clamp {
                input: self.clone(),
                lo,
                hi,
            },
        )
    }

    pub fn relu(&self) -> Tensor<E> {
        unary(
            self,
            |v| if v > E::zero() { v } else { E::zero() },
            Op::Relu(self.clone()),
        )
    }

    pub fn leaky_relu(&self, slope: E) -> Tensor<E> {
        unary(
            self,
            |v| if v > E::zero() { v } else { v * slope },
            Op::LeakyRelu(self.clone(), slope),
        )
    }

    pub fn sigmoid(&self) -> Tensor<E> {
        let one = E::one();
        let data: Vec<E> = self
            .data()
            .iter()
            .map(|&v| one / (one + (-v).exp()))
            .collect();
        let op = Op::Sigmoid {
            input: self.clone(),
            output: data.clone(),
        };
        Tensor::from_op(data, self.shape().to_vec(), op)
    }

    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&self, other: &Tensor<E>) -> Result<Tensor<E>> {
        if self.shape().len() != 2 || other.shape().len() != 2 {
            return Err(Error::contract(format!(
                "matmul requires rank-2 operands, got {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let (m, k) = (self.shape()[0], self.shape()[1]);
        let (k2, n) = (other.shape()[0], other.shape()[1]);
        if k != k2 {
            return Err(Error::contract(format!(
                "matmul inner dimensions disagree: {:?} x {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let mut out = vec![E::zero(); m * n];
        gemm(m, k, n, &self.data(), &other.data(), &mut out);
        Ok(Tensor::from_op(
            out,
            vec![m, n],
            Op::Matmul {
                a: self.clone(),
                b: other.clone(),
            },
        ))
    }

    /// Sum of all elements, as a `[1]`-shaped tensor.
    pub fn sum(&self) -> Tensor<E> {
        let s = self.data().iter().copied().sum();
        Tensor::from_op(vec![s], vec![1], Op::Sum(self.clone()))
    }

    /// Mean of all elements, as a `[1]`-shaped tensor.
    pub fn mean(&self) -> Tensor<E> {
        let n = E::from_usize(self.numel()).unwrap();
        let s: E = self.data().iter().copied().sum();
        Tensor::from_op(vec![s / n], vec![1], Op::Mean(self.clone()))
    }

    /// Sum along one axis, keeping it as an extent-1 dimension.
    pub fn sum_axis(&self, axis: usize) -> Result<Tensor<E>> {
        let shape = self.shape();
        if axis >= shape.len() {
            return Err(Error::contract(format!(
                "sum_axis: axis {} out of range for shape {:?}",
                axis, shape
            )));
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let mut out_shape = shape.to_vec();
        out_shape[axis] = 1;
        let data = self.data();
        let mut out = vec![E::zero(); outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let row = &data[(o * len + l) * inner..(o * len + l + 1) * inner];
                let dst = &mut out[o * inner..(o + 1) * inner];
                for (d, &r) in dst.iter_mut().zip(row) {
                    *d = *d + r;
                }
            }
        }
        Ok(Tensor::from_op(
            out,
            out_shape,
            Op::SumAxis {
                input: self.clone(),
                axis,
            },
        ))
    }

    /// View with a new shape over the same element order.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<E>> {
        let numel: usize = shape.iter().product();
        if numel != self.numel() {
            return Err(Error::contract(format!(
                "reshape {:?} -> {:?} changes element count",
                self.shape(),
                shape
            )));
        }
        Ok(Tensor::from_op(
            self.to_vec(),
            shape.to_vec(),
            Op::Reshape(self.clone()),
        ))
    }

    /// Concatenate two tensors along `axis`; all other extents must agree.
    pub fn concat(&self, other: &Tensor<E>, axis: usize) -> Result<Tensor<E>> {
        let sa = self.shape();
        let sb = other.shape();
        if sa.len() != sb.len() || axis >= sa.len() {
            return Err(Error::contract(format!(
                "concat axis {} of shapes {:?} and {:?}",
                axis, sa, sb
            )));
        }
        for d in 0..sa.len() {
            if d != axis && sa[d] != sb[d] {
                return Err(Error::contract(format!(
                    "concat: shapes {:?} and {:?} differ outside axis {}",
                    sa, sb, axis
                )));
            }
        }
        let outer: usize = sa[..axis].iter().product();
        let inner_a: usize = sa[axis..].iter().product();
        let inner_b: usize = sb[axis..].iter().product();
        let mut out_shape = sa.to_vec();
        out_shape[axis] += sb[axis];
        let da = self.data();
        let db = other.data();
        let mut out = Vec::with_capacity(outer * (inner_a + inner_b));
        for o in 0..outer {
            out.extend_from_slice(&da[o * inner_a..(o + 1) * inner_a]);
            out.extend_from_slice(&db[o * inner_b..(o + 1) * inner_b]);
        }
        Ok(Tensor::from_op(
            out,
            out_shape,
            Op::Concat {
                a: self.clone(),
                b: other.clone(),
                axis,
            },
        ))
    }
}

const GEMM_PAR_THRESHOLD: usize = 1 << 15;
/// Rows of the output processed per pass over `b`, trading B-matrix
/// traffic for registers. Accumulation order per element is unaffected.
const ROW_BLOCK: usize = 8;

/// `c += a @ b` for row-major `a: [m,k]`, `b: [k,n]`, `c: [m,n]`.
///
/// Each output element is a fixed-order sum over `p`, so the blocked and
/// parallel paths are all bitwise equivalent to the naive triple loop.
pub(crate) fn gemm<E: Element>(m: usize, k: usize, n: usize, a: &[E], b: &[E], c: &mut [E]) {
    let block = |cb: &mut [E], i0: usize| {
        let rows = cb.len() / n;
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            for r in 0..rows {
                let aip = a[(i0 + r) * k + p];
                let crow = &mut cb[r * n..(r + 1) * n];
                for (cj, &bj) in crow.iter_mut().zip(brow) {
                    *cj = *cj + aip * bj;
                }
            }
        }
    };
    if m * k * n >= GEMM_PAR_THRESHOLD && m > ROW_BLOCK {
        c.par_chunks_mut(ROW_BLOCK * n)
            .enumerate()
            .for_each(|(bi, cb)| block(cb, bi * ROW_BLOCK));
    } else {
        for (bi, cb) in c.chunks_mut(ROW_BLOCK * n).enumerate() {
            block(cb, bi * ROW_BLOCK);
        }
    }
}

/// Dot product in eight fixed-order lanes so the loop vectorizes; the
/// lane layout is constant, keeping results bitwise reproducible.
fn dot_lanes<E: Element>(a: &[E], b: &[E]) -> E {
    const LANES: usize = 8;
    let mut acc = [E::zero(); LANES];
    let chunks = a.len() / LANES;
    for i in 0..chunks {
        for l in 0..LANES {
            let idx = i * LANES + l;
            acc[l] = acc[l] + a[idx] * b[idx];
        }
    }
    let mut tail = E::zero();
    for idx in chunks * LANES..a.len() {
        tail = tail + a[idx] * b[idx];
    }
    let s01 = acc[0] + acc[1];
    let s23 = acc[2] + acc[3];
    let s45 = acc[4] + acc[5];
    let s67 = acc[6] + acc[7];
    ((s01 + s23) + (s45 + s67)) + tail
}

/// `c += a @ b^T` for row-major `a: [m,k]`, `b: [n,k]`, `c: [m,n]`.
pub(crate) fn gemm_abt<E: Element>(m: usize, k: usize, n: usize, a: &[E], b: &[E], c: &mut [E]) {
    let block = |cb: &mut [E], i0: usize| {
        let rows = cb.len() / n;
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            for r in 0..rows {
                let arow = &a[(i0 + r) * k..(i0 + r + 1) * k];
                cb[r * n + j] = cb[r * n + j] + dot_lanes(arow, brow);
            }
        }
    };
    if m * k * n >= GEMM_PAR_THRESHOLD && m > ROW_BLOCK {
        c.par_chunks_mut(ROW_BLOCK * n)
            .enumerate()
            .for_each(|(bi, cb)| block(cb, bi * ROW_BLOCK));
    } else {
        for (bi, cb) in c.chunks_mut(ROW_BLOCK * n).enumerate() {
            block(cb, bi * ROW_BLOCK);
        }
    }
}

/// `c += a^T @ b` for row-major `a: [m,k]`, `b: [m,n]`, `c: [k,n]`.
pub(crate) fn gemm_atb<E: Element>(m: usize, k: usize, n: usize, a: &[E], b: &[E], c: &mut [E]) {
    let block = |cb: &mut [E], p0: usize| {
        let rows = cb.len() / n;
        for i in 0..m {
            let brow = &b[i * n..(i + 1) * n];
            for r in 0..rows {
                let aip = a[i * k + p0 + r];
                let crow = &mut cb[r * n..(r + 1) * n];
                for (cj, &bj) in crow.iter_mut().zip(brow) {
                    *cj = *cj + aip * bj;
                }
            }
        }
    };
    if m * k * n >= GEMM_PAR_THRESHOLD && k > ROW_BLOCK {
        c.par_chunks_mut(ROW_BLOCK * n)
            .enumerate()
            .for_each(|(bi, cb)| block(cb, bi * ROW_BLOCK));
    } else {
        for (bi, cb) in c.chunks_mut(ROW_BLOCK * n).enumerate() {
            block(cb, bi * ROW_BLOCK);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t64(data: &[f64], shape: &[usize]) -> Tensor<f64> {
        Tensor::from_vec(data.to_vec(), shape).unwrap()
    }

    #[test]
    fn add_componentwise() {
        let r = t64(&[1.0, 2.0], &[2]).add(&t64(&[3.0, 4.0], &[2])).unwrap();
        assert_eq!(r.to_vec(), vec![4.0, 6.0]);
    }

    #[test]
    fn mul_by_zero_annihilates_with_zero_grad() {
        let x = Tensor::<f64>::param(vec![3.0, -2.0], &[2]).unwrap();
        let z = Tensor::<f64>::zeros(&[2]);
        let y = x.mul(&z).unwrap();
        assert_eq!(y.to_vec(), vec![0.0, 0.0]);
        y.sum().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn exp_of_zero_and_ln2() {
        let r = t64(&[0.0, std::f64::consts::LN_2], &[2]).exp();
        assert!((r.to_vec()[0] - 1.0).abs() < 1e-15);
        assert!((r.to_vec()[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn broadcast_trailing_rule() {
        assert_eq!(broadcast_shape(&[4, 3], &[3]).unwrap(), vec![4, 3]);
        assert_eq!(broadcast_shape(&[4, 1], &[4, 3]).unwrap(), vec![4, 3]);
        assert_eq!(broadcast_shape(&[2, 1, 3], &[5, 1]).unwrap(), vec![2, 5, 3]);
        let err = broadcast_shape(&[4, 2], &[3]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[4, 2]") && msg.contains("[3]"), "{msg}");
    }

    #[test]
    fn broadcast_add_values() {
        let a = t64(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2, 3]);
        let b = t64(&[10.0, 20.0, 30.0], &[3]);
        let r = a.add(&b).unwrap();
        assert_eq!(r.to_vec(), vec![11.0, 22.0, 33.0, 14.0, 25.0, 36.0]);
        assert_eq!(r.shape(), &[2, 3]);
    }

    #[test]
    fn matmul_identity_and_dot() {
        let i2 = t64(&[1.0, 0.0, 0.0, 1.0], &[2, 2]);
        let m = t64(&[1.0, 2.0, 3.0, 4.0], &[2, 2]);
        assert_eq!(i2.matmul(&m).unwrap().to_vec(), vec![1.0, 2.0, 3.0, 4.0]);

        let a = t64(&[1.0, 2.0], &[1, 2]);
        let b = t64(&[3.0, 4.0], &[2, 1]);
        assert_eq!(a.matmul(&b).unwrap().to_vec(), vec![11.0]);
    }

    #[test]
    fn matmul_inner_mismatch_is_contract_violation() {
        let a = t64(&[1.0; 6], &[2, 3]);
        let b = t64(&[1.0; 8], &[4, 2]);
        assert!(matches!(a.matmul(&b), Err(crate::error::Error::Contract(_))));
    }

    #[test]
    fn sum_axis_keeps_dim() {
        let a = t64(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2, 3]);
        let s = a.sum_axis(1).unwrap();
        assert_eq!(s.shape(), &[2, 1]);
        assert_eq!(s.to_vec(), vec![6.0, 15.0]);
        let s0 = a.sum_axis(0).unwrap();
        assert_eq!(s0.shape(), &[1, 3]);
        assert_eq!(s0.to_vec(), vec![5.0, 7.0, 9.0]);
    }

    #[test]
    fn concat_along_axis1() {
        let a = t64(&[1.0, 2.0, 3.0, 4.0], &[2, 2]);
        let b = t64(&[5.0, 6.0], &[2, 1]);
        let c = a.concat(&b, 1).unwrap();
        assert_eq!(c.shape(), &[2, 3]);
        assert_eq!(c.to_vec(), vec![1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
    }

    #[test]
    fn gemm_matches_naive() {
        let m = 7;
        let k = 5;
        let n = 6;
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64) * 0.3 - 2.0).collect();
        let b: Vec<f64> = (0..k * n).map(|i| 1.0 - (i as f64) * 0.1).collect();
        let mut c = vec![0.0; m * n];
        gemm(m, k, n, &a, &b, &mut c);
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for p in 0..k {
                    acc += a[i * k + p] * b[p * n + j];
                }
                assert!((c[i * n + j] - acc).abs() < 1e-12);
            }
        }
        // transposed variants agree with the plain one
        let mut c_abt = vec![0.0; m * n];
        let bt: Vec<f64> = {
            let mut t = vec![0.0; n * k];
            for p in 0..k {
                for j in 0..n {
                    t[j * k + p] = b[p * n + j];
                }
            }
            t
        };
        gemm_abt(m, k, n, &a, &bt, &mut c_abt);
        assert_eq!(c, c_abt);
    }
}
