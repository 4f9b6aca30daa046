//! 2-D convolution and transposed convolution, forward and backward.
//!
//! Layout is row-major `[N, C, H, W]` throughout. Both directions reduce to
//! matrix products against a batched im2col matrix whose columns run over
//! (sample, output position), so each convolution is one long-inner-loop
//! GEMM rather than many narrow per-sample ones. The transposed
//! convolution's forward IS the convolution's input-gradient routine, so
//! the adjoint identity `<conv(x, w), y> == <x, conv_t(y, w)>` holds by
//! construction.
//!
//! Every output element is produced by exactly one parallel task as a
//! fixed-order sum, so results are bitwise independent of the thread count.

use rayon::prelude::*;

use super::autodiff::Op;
use super::ops::{gemm, gemm_abt, gemm_atb};
use super::{Element, Tensor};
use crate::error::{Error, Result};

/// `floor((extent + 2*pad - k) / stride) + 1`, rejecting kernels larger
/// than the padded input.
pub fn conv2d_output_extent(extent: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    if k == 0 || stride == 0 {
        return Err(Error::contract("conv2d: kernel and stride must be positive"));
    }
    if extent + 2 * pad < k {
        return Err(Error::contract(format!(
            "conv2d: kernel {} exceeds padded input extent {} (input {}, pad {})",
            k,
            extent + 2 * pad,
            extent,
            pad
        )));
    }
    Ok((extent + 2 * pad - k) / stride + 1)
}

/// `(extent - 1) * stride - 2*pad + k`, rejecting non-positive results.
pub fn conv_transpose2d_output_extent(
    extent: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> Result<usize> {
    if k == 0 || stride == 0 {
        return Err(Error::contract(
            "conv_transpose2d: kernel and stride must be positive",
        ));
    }
    let grown = (extent - 1) * stride + k;
    if grown <= 2 * pad {
        return Err(Error::contract(format!(
            "conv_transpose2d: computed output extent {} - {} is not positive",
            grown,
            2 * pad
        )));
    }
    Ok(grown - 2 * pad)
}

#[derive(Clone, Copy)]
struct Geom {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    h_out: usize,
    w_out: usize,
}

impl Geom {
    fn span(&self) -> usize {
        self.h_out * self.w_out
    }
    fn ckk(&self) -> usize {
        self.c * self.k * self.k
    }
    /// Length of one im2col row: all samples' output positions.
    fn row_len(&self) -> usize {
        self.n * self.span()
    }
}

/// Unfold the whole batch into `[C*k*k, N*span]`: row `(c,i,j)`, column
/// `(n, oy, ox)`. Parallel over rows.
fn im2col_batched<E: Element>(x: &[E], g: &Geom, cols: &mut [E]) {
    let Geom { n, c, h, w, k, stride, pad, h_out, w_out } = *g;
    let span = h_out * w_out;
    cols.par_chunks_mut(g.row_len()).enumerate().for_each(|(q, row)| {
        let ci = q / (k * k);
        let i = (q / k) % k;
        let j = q % k;
        for ni in 0..n {
            let plane = &x[(ni * c + ci) * h * w..(ni * c + ci + 1) * h * w];
            let dst_n = &mut row[ni * span..(ni + 1) * span];
            for oy in 0..h_out {
                let iy = (oy * stride + i) as isize - pad as isize;
                let dst = &mut dst_n[oy * w_out..(oy + 1) * w_out];
                if iy < 0 || iy >= h as isize {
                    for d in dst.iter_mut() {
                        *d = E::zero();
                    }
                    continue;
                }
                let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                for (ox, d) in dst.iter_mut().enumerate() {
                    let ix = (ox * stride + j) as isize - pad as isize;
                    *d = if ix < 0 || ix >= w as isize { E::zero() } else { src[ix as usize] };
                }
            }
        }
    });
}

/// Fold `[C*k*k, N*span]` columns back into `[N, C, H, W]`, accumulating
/// where windows overlap. Parallel over samples.
fn col2im_batched<E: Element>(cols: &[E], g: &Geom, x: &mut [E]) {
    let Geom { c, h, w, k, stride, pad, h_out, w_out, .. } = *g;
    let span = g.span();
    let row_len = g.row_len();
    x.par_chunks_mut(c * h * w).enumerate().for_each(|(ni, x_n)| {
        for ci in 0..c {
            let plane = &mut x_n[ci * h * w..(ci + 1) * h * w];
            for i in 0..k {
                for j in 0..k {
                    let q = (ci * k + i) * k + j;
                    let src_n = &cols[q * row_len + ni * span..q * row_len + (ni + 1) * span];
                    for oy in 0..h_out {
                        let iy = (oy * stride + i) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                        let src = &src_n[oy * w_out..(oy + 1) * w_out];
                        for (ox, &s) in src.iter().enumerate() {
                            let ix = (ox * stride + j) as isize - pad as isize;
                            if ix >= 0 && (ix as usize) < w {
                                dst[ix as usize] = dst[ix as usize] + s;
                            }
                        }
                    }
                }
            }
        }
    });
}

/// Transpose `[N, F, span]` into `[F, N*span]`.
fn gather_channel_major<E: Element>(src: &[E], n: usize, f: usize, span: usize) -> Vec<E> {
    let mut out = vec![E::zero(); f * n * span];
    out.par_chunks_mut(n * span).enumerate().for_each(|(fi, row)| {
        for ni in 0..n {
            let s = &src[(ni * f + fi) * span..(ni * f + fi + 1) * span];
            row[ni * span..(ni + 1) * span].copy_from_slice(s);
        }
    });
    out
}

/// Transpose `[F, N*span]` back into `[N, F, span]`, adding `bias[f]` when
/// provided.
fn scatter_sample_major<E: Element>(src: &[E], n: usize, f: usize, span: usize, bias: &[E]) -> Vec<E> {
    let mut out = vec![E::zero(); n * f * span];
    out.par_chunks_mut(f * span).enumerate().for_each(|(ni, chunk)| {
        for fi in 0..f {
            let s = &src[fi * n * span + ni * span..fi * n * span + (ni + 1) * span];
            let d = &mut chunk[fi * span..(fi + 1) * span];
            if bias.is_empty() {
                d.copy_from_slice(s);
            } else {
                let b = bias[fi];
                for (dv, &sv) in d.iter_mut().zip(s) {
                    *dv = sv + b;
                }
            }
        }
    });
    out
}

fn geom_for(in_shape: &[usize], k: usize, stride: usize, pad: usize) -> Result<Geom> {
    let (n, c, h, w) = (in_shape[0], in_shape[1], in_shape[2], in_shape[3]);
    let h_out = conv2d_output_extent(h, k, stride, pad)?;
    let w_out = conv2d_output_extent(w, k, stride, pad)?;
    Ok(Geom { n, c, h, w, k, stride, pad, h_out, w_out })
}

/// Convolution forward over a batch; `bias` of length F, or empty for none.
/// Also returns the im2col matrix so a recorded op can reuse it backward.
pub(crate) fn conv_forward<E: Element>(
    input: &[E],
    in_shape: &[usize],
    weight: &[E],
    w_shape: &[usize],
    bias: &[E],
    stride: usize,
    pad: usize,
) -> Result<(Vec<E>, Vec<usize>, Vec<E>)> {
    let f = w_shape[0];
    let g = geom_for(in_shape, w_shape[2], stride, pad)?;
    let mut cols = vec![E::zero(); g.ckk() * g.row_len()];
    im2col_batched(input, &g, &mut cols);
    let mut y_big = vec![E::zero(); f * g.row_len()];
    gemm(f, g.ckk(), g.row_len(), weight, &cols, &mut y_big);
    let out = scatter_sample_major(&y_big, g.n, f, g.span(), bias);
    Ok((out, vec![g.n, f, g.h_out, g.w_out], cols))
}

/// Input and weight gradients of a convolution, sharing one transposed
/// copy of `dy`. `cols` is the im2col matrix cached by the forward pass
/// (rebuilt here when absent). Either output can be skipped.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward<E: Element>(
    input: &[E],
    in_shape: &[usize],
    weight: &[E],
    w_shape: &[usize],
    dy: &[E],
    stride: usize,
    pad: usize,
    cols: Option<&[E]>,
    need_dx: bool,
    need_dw: bool,
) -> (Option<Vec<E>>, Option<Vec<E>>) {
    let f = w_shape[0];
    let g = geom_for(in_shape, w_shape[2], stride, pad).expect("validated at forward");
    let dy_big = gather_channel_major(dy, g.n, f, g.span());
    let dx = need_dx.then(|| {
        let mut dcols = vec![E::zero(); g.ckk() * g.row_len()];
        gemm_atb(f, g.ckk(), g.row_len(), weight, &dy_big, &mut dcols);
        let mut dx = vec![E::zero(); g.n * g.c * g.h * g.w];
        col2im_batched(&dcols, &g, &mut dx);
        dx
    });
    let dw = need_dw.then(|| {
        let mut dw = vec![E::zero(); f * g.ckk()];
        match cols {
            Some(c) => gemm_abt(f, g.row_len(), g.ckk(), &dy_big, c, &mut dw),
            None => {
                let mut c = vec![E::zero(); g.ckk() * g.row_len()];
                im2col_batched(input, &g, &mut c);
                gemm_abt(f, g.row_len(), g.ckk(), &dy_big, &c, &mut dw);
            }
        }
        dw
    });
    (dx, dw)
}

/// Input and weight gradients of a transposed convolution, sharing one
/// unfolding of `dy` between them.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_transpose_backward<E: Element>(
    input: &[E],
    in_shape: &[usize],
    weight: &[E],
    w_shape: &[usize],
    dy: &[E],
    dy_shape: &[usize],
    stride: usize,
    pad: usize,
    need_dx: bool,
    need_dw: bool,
) -> (Option<Vec<E>>, Option<Vec<E>>) {
    let (n, c) = (in_shape[0], in_shape[1]);
    let f = w_shape[1];
    // the reference convolution runs from dy back to the input's geometry
    let g = Geom {
        n,
        c: f,
        h: dy_shape[2],
        w: dy_shape[3],
        k: w_shape[2],
        stride,
        pad,
        h_out: in_shape[2],
        w_out: in_shape[3],
    };
    let mut cols_dy = vec![E::zero(); g.ckk() * g.row_len()];
    im2col_batched(dy, &g, &mut cols_dy);
    let dx = need_dx.then(|| {
        let mut dx_big = vec![E::zero(); c * g.row_len()];
        gemm(c, g.ckk(), g.row_len(), weight, &cols_dy, &mut dx_big);
        scatter_sample_major(&dx_big, n, c, g.span(), &[])
    });
    let dw = need_dw.then(|| {
        let x_big = gather_channel_major(input, n, c, g.span());
        let mut dw = vec![E::zero(); c * g.ckk()];
        gemm_abt(c, g.row_len(), g.ckk(), &x_big, &cols_dy, &mut dw);
        dw
    });
    (dx, dw)
}

/// Forward of the transposed convolution: weight `[C, F, k, k]`, geometry
/// the exact inverse of the matching conv2d.
pub(crate) fn conv_transpose_forward<E: Element>(
    input: &[E],
    in_shape: &[usize],
    weight: &[E],
    w_shape: &[usize],
    bias: &[E],
    stride: usize,
    pad: usize,
    out_shape: &[usize],
) -> Vec<E> {
    let (n, c) = (in_shape[0], in_shape[1]);
    let f = w_shape[1];
    let g = Geom {
        n,
        c: f,
        h: out_shape[2],
        w: out_shape[3],
        k: w_shape[2],
        stride,
        pad,
        h_out: in_shape[2],
        w_out: in_shape[3],
    };
    let x_big = gather_channel_major(input, n, c, g.span());
    let mut dcols = vec![E::zero(); g.ckk() * g.row_len()];
    gemm_atb(c, g.ckk(), g.row_len(), weight, &x_big, &mut dcols);
    let mut out = vec![E::zero(); n * f * g.h * g.w];
    col2im_batched(&dcols, &g, &mut out);
    if !bias.is_empty() {
        let plane = g.h * g.w;
        out.par_chunks_mut(f * plane).for_each(|chunk| {
            for fi in 0..f {
                let b = bias[fi];
                for v in chunk[fi * plane..(fi + 1) * plane].iter_mut() {
                    *v = *v + b;
                }
            }
        });
    }
    out
}

/// Gradient of a convolution w.r.t. its bias: sum over batch and space.
pub(crate) fn conv_bias_grad<E: Element>(dy: &[E], dy_shape: &[usize]) -> Vec<E> {
    let (n, f) = (dy_shape[0], dy_shape[1]);
    let span = dy_shape[2] * dy_shape[3];
    let mut db = vec![E::zero(); f];
    for ni in 0..n {
        for (fi, d) in db.iter_mut().enumerate() {
            let row = &dy[(ni * f + fi) * span..(ni * f + fi + 1) * span];
            for &v in row {
                *d = *d + v;
            }
        }
    }
    db
}

fn check_rank4<E: Element>(name: &str, t: &Tensor<E>) -> Result<()> {
    if t.shape().len() != 4 {
        return Err(Error::contract(format!(
            "{name} requires a rank-4 tensor, got shape {:?}",
            t.shape()
        )));
    }
    Ok(())
}

impl<E: Element> Tensor<E> {
    /// 2-D convolution: input `[N,C,H,W]`, weight `[F,C,k,k]`, bias `[F]`.
    pub fn conv2d(
        &self,
        weight: &Tensor<E>,
        bias: &Tensor<E>,
        stride: usize,
        pad: usize,
    ) -> Result<Tensor<E>> {
        check_rank4("conv2d input", self)?;
        check_rank4("conv2d weight", weight)?;
        let (c, f) = (self.shape()[1], weight.shape()[0]);
        if weight.shape()[1] != c {
            return Err(Error::contract(format!(
                "conv2d: weight expects {} input channels, input has {}",
                weight.shape()[1],
                c
            )));
        }
        if weight.shape()[2] != weight.shape()[3] {
            return Err(Error::contract("conv2d: only square kernels are supported"));
        }
        if bias.shape() != [f] {
            return Err(Error::contract(format!(
                "conv2d: bias shape {:?} does not match {} filters",
                bias.shape(),
                f
            )));
        }
        let (data, shape, cols) = conv_forward(
            &self.data(),
            self.shape(),
            &weight.data(),
            weight.shape(),
            &bias.data(),
            stride,
            pad,
        )?;
        Ok(Tensor::from_op(
            data,
            shape,
            Op::Conv2d {
                input: self.clone(),
                weight: weight.clone(),
                bias: bias.clone(),
                stride,
                pad,
                cols,
            },
        ))
    }

    /// Transposed 2-D convolution: input `[N,C,H,W]`, weight `[C,F,k,k]`,
    /// bias `[F]`. Adjoint of [`Tensor::conv2d`] with the same geometry.
    pub fn conv_transpose2d(
        &self,
        weight: &Tensor<E>,
        bias: &Tensor<E>,
        stride: usize,
        pad: usize,
    ) -> Result<Tensor<E>> {
        check_rank4("conv_transpose2d input", self)?;
        check_rank4("conv_transpose2d weight", weight)?;
        let (n, c, h, w) = (
            self.shape()[0],
            self.shape()[1],
            self.shape()[2],
            self.shape()[3],
        );
        if weight.shape()[0] != c {
            return Err(Error::contract(format!(
                "conv_transpose2d: weight expects {} input channels, input has {}",
                weight.shape()[0],
                c
            )));
        }
        if weight.shape()[2] != weight.shape()[3] {
            return Err(Error::contract(
                "conv_transpose2d: only square kernels are supported",
            ));
        }
        let f = weight.shape()[1];
        let k = weight.shape()[2];
        if bias.shape() != [f] {
            return Err(Error::contract(format!(
                "conv_transpose2d: bias shape {:?} does not match {} filters",
                bias.shape(),
                f
            )));
        }
        let h2 = conv_transpose2d_output_extent(h, k, stride, pad)?;
        let w2 = conv_transpose2d_output_extent(w, k, stride, pad)?;
        let out_shape = vec![n, f, h2, w2];
        let data = conv_transpose_forward(
            &self.data(),
            self.shape(),
            &weight.data(),
            weight.shape(),
            &bias.data(),
            stride,
            pad,
            &out_shape,
        );
        Ok(Tensor::from_op(
            data,
            out_shape,
            Op::ConvTranspose2d {
                input: self.clone(),
                weight: weight.clone(),
                bias: bias.clone(),
                stride,
                pad,
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct nested-loop convolution used as the oracle.
    #[allow(clippy::too_many_arguments)]
    fn conv_naive(
        x: &[f64],
        n: usize,
        c: usize,
        h: usize,
        w: usize,
        wt: &[f64],
        f: usize,
        k: usize,
        bias: &[f64],
        stride: usize,
        pad: usize,
    ) -> Vec<f64> {
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (w + 2 * pad - k) / stride + 1;
        let mut y = vec![0.0; n * f * ho * wo];
        for ni in 0..n {
            for fi in 0..f {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = bias[fi];
                        for ci in 0..c {
                            for i in 0..k {
                                for j in 0..k {
                                    let iy = (oy * stride + i) as isize - pad as isize;
                                    let ix = (ox * stride + j) as isize - pad as isize;
                                    if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                                        acc += x[((ni * c + ci) * h + iy as usize) * w
                                            + ix as usize]
                                            * wt[((fi * c + ci) * k + i) * k + j];
                                    }
                                }
                            }
                        }
                        y[((ni * f + fi) * ho + oy) * wo + ox] = acc;
                    }
                }
            }
        }
        y
    }

    fn t(data: Vec<f64>, shape: &[usize]) -> Tensor<f64> {
        Tensor::from_vec(data, shape).unwrap()
    }

    #[test]
    fn output_extent_chain_halves_to_four() {
        // paper geometry: six k=4 s=2 p=1 stages take 256 down to 4
        let mut e = 256;
        for _ in 0..6 {
            e = conv2d_output_extent(e, 4, 2, 1).unwrap();
        }
        assert_eq!(e, 4);
        // and the transposed chain grows it back
        for _ in 0..6 {
            e = conv_transpose2d_output_extent(e, 4, 2, 1).unwrap();
        }
        assert_eq!(e, 256);
    }

    #[test]
    fn kernel_larger_than_padded_input_rejected() {
        let err = conv2d_output_extent(2, 5, 1, 1).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn frozen_window_sum_example() {
        // 3x3 input 1..9, all-ones 2x2 kernel, stride 1, no padding
        let x = t((1..=9).map(|v| v as f64).collect(), &[1, 1, 3, 3]);
        let w = t(vec![1.0; 4], &[1, 1, 2, 2]);
        let b = Tensor::<f64>::zeros(&[1]);
        let y = x.conv2d(&w, &b, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert_eq!(y.to_vec(), vec![12.0, 16.0, 24.0, 28.0]);
    }

    #[test]
    fn one_by_one_kernel_of_two_doubles_input() {
        let x = t(vec![0.5, -1.0, 3.0, 2.0, 0.0, 1.5], &[1, 1, 2, 3]);
        let w = t(vec![2.0], &[1, 1, 1, 1]);
        let b = Tensor::<f64>::zeros(&[1]);
        let y = x.conv2d(&w, &b, 1, 0).unwrap();
        assert_eq!(y.to_vec(), vec![1.0, -2.0, 6.0, 4.0, 0.0, 3.0]);
    }

    #[test]
    fn conv_matches_direct_summation_oracle() {
        let mut rng = crate::rng::SeedRng::new(11);
        let (n, c, h, w, f, k) = (2, 3, 7, 6, 4, 3);
        let mut x = vec![0.0f64; n * c * h * w];
        let mut wt = vec![0.0f64; f * c * k * k];
        let mut bias = vec![0.0f64; f];
        rng.fill_uniform(&mut x, -1.0, 1.0);
        rng.fill_uniform(&mut wt, -0.5, 0.5);
        rng.fill_uniform(&mut bias, -0.2, 0.2);
        for &(stride, pad) in &[(1usize, 0usize), (2, 1), (1, 2), (3, 1)] {
            let y = t(x.clone(), &[n, c, h, w])
                .conv2d(&t(wt.clone(), &[f, c, k, k]), &t(bias.clone(), &[f]), stride, pad)
                .unwrap();
            let oracle = conv_naive(&x, n, c, h, w, &wt, f, k, &bias, stride, pad);
            assert_eq!(y.to_vec().len(), oracle.len());
            for (a, b) in y.to_vec().iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-12, "stride {stride} pad {pad}");
            }
        }
    }

    #[test]
    fn conv_transpose_identity_kernel_is_identity() {
        let x = t(vec![1.0, 2.0, 3.0, 4.0], &[1, 1, 2, 2]);
        let w = t(vec![1.0], &[1, 1, 1, 1]);
        let b = Tensor::<f64>::zeros(&[1]);
        let y = x.conv_transpose2d(&w, &b, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert_eq!(y.to_vec(), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn conv_transpose_shape_grows() {
        let x = Tensor::<f64>::zeros(&[1, 2, 4, 4]);
        let w = Tensor::<f64>::zeros(&[2, 3, 4, 4]);
        let b = Tensor::<f64>::zeros(&[3]);
        let y = x.conv_transpose2d(&w, &b, 2, 1).unwrap();
        assert_eq!(y.shape(), &[1, 3, 8, 8]);
    }

    #[test]
    fn adjoint_identity_conv_pair() {
        // <conv2d(x, w), y> == <x, conv_transpose2d(y, w)>
        let mut rng = crate::rng::SeedRng::new(5);
        let (n, c, h, w, f, k, stride, pad) = (2, 3, 8, 8, 4, 4, 2, 1);
        let ho = conv2d_output_extent(h, k, stride, pad).unwrap();
        let mut xv = vec![0.0f64; n * c * h * w];
        let mut wv = vec![0.0f64; f * c * k * k];
        let mut yv = vec![0.0f64; n * f * ho * ho];
        rng.fill_uniform(&mut xv, -1.0, 1.0);
        rng.fill_uniform(&mut wv, -1.0, 1.0);
        rng.fill_uniform(&mut yv, -1.0, 1.0);
        let x = t(xv.clone(), &[n, c, h, w]);
        let wt = t(wv, &[f, c, k, k]);
        let y = t(yv.clone(), &[n, f, ho, ho]);
        let zero_f = Tensor::<f64>::zeros(&[f]);
        let zero_c = Tensor::<f64>::zeros(&[c]);

        let cx = x.conv2d(&wt, &zero_f, stride, pad).unwrap();
        // transposed conv consumes [N,F,...] with weight [F,C,k,k]
        let ty = y.conv_transpose2d(&wt, &zero_c, stride, pad).unwrap();
        assert_eq!(ty.shape(), &[n, c, h, w]);

        let lhs: f64 = cx.to_vec().iter().zip(&yv).map(|(a, b)| a * b).sum();
        let rhs: f64 = ty.to_vec().iter().zip(&xv).map(|(a, b)| a * b).sum();
        assert!(
            (lhs - rhs).abs() <= 1e-6 * lhs.abs().max(rhs.abs()).max(1.0),
            "lhs {lhs} rhs {rhs}"
        );
    }

    #[test]
    fn conv_then_transpose_restores_extent() {
        for &(hin, k, s, p) in &[(8usize, 4usize, 2usize, 1usize), (16, 4, 2, 1), (9, 3, 2, 1), (7, 3, 1, 1)] {
            let ho = conv2d_output_extent(hin, k, s, p).unwrap();
            // exactness condition: the conv consumed the input with no remainder
            if (hin + 2 * p - k) % s == 0 {
                let back = conv_transpose2d_output_extent(ho, k, s, p).unwrap();
                assert_eq!(back, hin, "h {hin} k {k} s {s} p {p}");
            }
        }
    }
}
