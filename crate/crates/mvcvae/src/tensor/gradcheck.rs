//! Central-difference verification of analytic gradients.

use super::{backward, no_grad, Element, Tensor};
use crate::error::Result;

/// Compare the recorded-graph gradient of `f` against central differences.
///
/// `f` must be a deterministic scalar function of `params` (re-seed any
/// internal randomness per call). Returns the maximum over all parameter
/// entries of `|analytic - numeric| / max(1, |analytic|, |numeric|)`;
/// a NaN produced anywhere propagates into the result. Run this at f64 —
/// central differences at f32 drown in rounding error.
pub fn grad_check<E, F>(f: F, params: &[Tensor<E>], eps: E) -> Result<E>
where
    E: Element,
    F: Fn(&[Tensor<E>]) -> Result<Tensor<E>>,
{
    for p in params {
        p.zero_grad();
    }
    let loss = f(params)?;
    backward(&loss)?;
    let analytic: Vec<Vec<E>> = params
        .iter()
        .map(|p| p.grad().unwrap_or_else(|| vec![E::zero(); p.numel()]))
        .collect();

    let two = E::of_f64(2.0);
    let mut max_err = E::zero();
    for (pi, p) in params.iter().enumerate() {
        for j in 0..p.numel() {
            let orig = p.data()[j];
            p.update_data(|d| d[j] = orig + eps);
            let up = no_grad(|| f(params))?.item();
            p.update_data(|d| d[j] = orig - eps);
            let down = no_grad(|| f(params))?.item();
            p.update_data(|d| d[j] = orig);

            let numeric = (up - down) / (two * eps);
            let a = analytic[pi][j];
            let denom = E::one().max(a.abs()).max(numeric.abs());
            let err = (a - numeric).abs() / denom;
            if err.is_nan() {
                return Ok(err);
            }
            if err > max_err {
                max_err = err;
            }
        }
    }
    Ok(max_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_gradient_has_zero_error() {
        let p = Tensor::<f64>::param(vec![0.3, -1.7, 2.2], &[3]).unwrap();
        let err = grad_check(|ps| Ok(ps[0].sum()), &[p], 1e-5).unwrap();
        assert!(err < 1e-9, "err {err}");
    }

    #[test]
    fn l1_gradient_off_ties() {
        // |p - t| at points away from ties; subgradient convention never hit
        let p = Tensor::<f64>::param(vec![0.5, -0.25, 2.0], &[3]).unwrap();
        let target = Tensor::<f64>::from_vec(vec![0.0, 1.0, -1.0], &[3]).unwrap();
        let err = grad_check(
            |ps| Ok(ps[0].sub(&target)?.abs().mean()),
            &[p],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-5, "err {err}");
    }

    #[test]
    fn matmul_gradient_matches_finite_differences() {
        let mut rng = crate::rng::SeedRng::new(42);
        let mut a = vec![0.0f64; 12];
        let mut b = vec![0.0f64; 8];
        rng.fill_uniform(&mut a, -1.0, 1.0);
        rng.fill_uniform(&mut b, -1.0, 1.0);
        let a = Tensor::param(a, &[3, 4]).unwrap();
        let b = Tensor::param(b, &[4, 2]).unwrap();
        let err = grad_check(|ps| Ok(ps[0].matmul(&ps[1])?.sum()), &[a, b], 1e-5).unwrap();
        assert!(err < 1e-5, "err {err}");
    }

    #[test]
    fn composed_graph_matches_finite_differences() {
        let mut rng = crate::rng::SeedRng::new(9);
        let mut xv = vec![0.0f64; 6];
        rng.fill_uniform(&mut xv, 0.2, 1.5);
        let x = Tensor::param(xv, &[2, 3]).unwrap();
        let w = Tensor::param(vec![0.4, -0.3, 0.8, 0.1, 0.2, -0.6], &[3, 2]).unwrap();
        let f = |ps: &[Tensor<f64>]| -> Result<Tensor<f64>> {
            let h = ps[0].matmul(&ps[1])?;
            let g = h.sigmoid().mul(&h.exp())?;
            let r = g.add(&ps[0].log().sum_axis(1)?.reshape(&[2, 1])?)?;
            Ok(r.square()?.mean())
        };
        let err = grad_check(f, &[x, w], 1e-4).unwrap();
        assert!(err < 1e-5, "err {err}");
    }

    #[test]
    fn conv_and_transpose_gradients_match_finite_differences() {
        let mut rng = crate::rng::SeedRng::new(31);
        let mut xv = vec![0.0f64; 2 * 2 * 6 * 6];
        let mut wv = vec![0.0f64; 3 * 2 * 3 * 3];
        let mut bv = vec![0.0f64; 3];
        rng.fill_uniform(&mut xv, -1.0, 1.0);
        rng.fill_uniform(&mut wv, -0.5, 0.5);
        rng.fill_uniform(&mut bv, -0.1, 0.1);
        let x = Tensor::param(xv.clone(), &[2, 2, 6, 6]).unwrap();
        let w = Tensor::param(wv.clone(), &[3, 2, 3, 3]).unwrap();
        let b = Tensor::param(bv.clone(), &[3]).unwrap();
        let err = grad_check(
            |ps| Ok(ps[0].conv2d(&ps[1], &ps[2], 2, 1)?.square()?.mean()),
            &[x, w, b],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "conv2d err {err}");

        let x = Tensor::param(xv, &[2, 2, 6, 6]).unwrap();
        let wt = Tensor::param(wv, &[2, 3, 3, 3]).unwrap();
        let b = Tensor::param(bv, &[3]).unwrap();
        let err = grad_check(
            |ps| Ok(ps[0].conv_transpose2d(&ps[1], &ps[2], 2, 1)?.square()?.mean()),
            &[x, wt, b],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "conv_transpose2d err {err}");
    }

    #[test]
    fn nan_in_function_propagates() {
        let p = Tensor::<f64>::param(vec![-1.0], &[1]).unwrap();
        // log of a negative number is NaN
        let err = grad_check(|ps| Ok(ps[0].log().sum()), &[p], 1e-5).unwrap();
        assert!(err.is_nan());
    }
}
