//! PCA over embedding matrices via covariance eigendecomposition.
//!
//! Components come back ordered by descending eigenvalue with the sign
//! fixed so each component's largest-magnitude loading is positive, which
//! makes projections reproducible across runs.

use nalgebra::DMatrix;

/// A fitted projection: `k` components over `d`-dimensional data.
#[derive(Debug, Clone)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Row-major `[k, d]`, orthonormal rows.
    pub components: Vec<Vec<f64>>,
    /// Eigenvalues matching `components`, descending.
    pub eigenvalues: Vec<f64>,
}

/// Fit on row-major `data: [rows, d]`, keeping `k` components. With fewer
/// samples than dimensions the trailing eigenvalues are zero and the fit
/// proceeds on the available rank.
pub fn pca_fit(data: &[f64], rows: usize, d: usize, k: usize) -> Pca {
    assert!(rows > 0 && d > 0, "pca_fit on empty data");
    let k = k.min(d);
    let mut mean = vec![0.0; d];
    for row in data.chunks(d) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= rows as f64;
    }

    let denom = if rows > 1 { (rows - 1) as f64 } else { 1.0 };
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for row in data.chunks(d) {
        for i in 0..d {
            let ci = row[i] - mean[i];
            for j in i..d {
                cov[(i, j)] += ci * (row[j] - mean[j]) / denom;
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            cov[(i, j)] = cov[(j, i)];
        }
    }

    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());

    let mut components = Vec::with_capacity(k);
    let mut eigenvalues = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let col = eig.eigenvectors.column(idx);
        let mut v: Vec<f64> = col.iter().copied().collect();
        // sign convention: largest-magnitude loading positive
        let lead = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        if v[lead] < 0.0 {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
        components.push(v);
        eigenvalues.push(eig.eigenvalues[idx]);
    }
    Pca { mean, components, eigenvalues }
}

/// Project one `d`-dimensional row onto the fitted components.
pub fn pca_project(pca: &Pca, row: &[f64]) -> Vec<f64> {
    pca.components
        .iter()
        .map(|c| {
            c.iter()
                .zip(row)
                .zip(&pca.mean)
                .map(|((ci, xi), mi)| ci * (xi - mi))
                .sum()
        })
        .collect()
}

/// Reconstruct a row from its projection (exact when all components kept).
pub fn pca_reconstruct(pca: &Pca, coords: &[f64]) -> Vec<f64> {
    let d = pca.mean.len();
    let mut out = pca.mean.clone();
    for (c, &t) in pca.components.iter().zip(coords) {
        for j in 0..d {
            out[j] += t * c[j];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedRng;

    #[test]
    fn recovers_axis_aligned_variance() {
        // 2-D data stretched along x: first component is the x axis up to
        // the sign convention (which forces it positive)
        let mut rng = SeedRng::new(3);
        let mut data = Vec::new();
        for _ in 0..500 {
            data.push(rng.uniform_f64(-4.0, 4.0));
            data.push(rng.uniform_f64(-0.5, 0.5));
        }
        let pca = pca_fit(&data, 500, 2, 2);
        assert!(pca.components[0][0].abs() > 0.99, "{:?}", pca.components[0]);
        assert!(pca.components[0][0] > 0.0);
        assert!(pca.eigenvalues[0] > pca.eigenvalues[1]);
    }

    #[test]
    fn full_reconstruction_is_lossless() {
        let mut rng = SeedRng::new(8);
        let (rows, d) = (40, 6);
        let mut data = vec![0.0; rows * d];
        rng.fill_uniform(&mut data, -2.0, 2.0);
        let pca = pca_fit(&data, rows, d, d);
        for row in data.chunks(d) {
            let coords = pca_project(&pca, row);
            let back = pca_reconstruct(&pca, &coords);
            for (a, b) in row.iter().zip(&back) {
                assert!((a - b).abs() < 1e-5, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn separates_clustered_input() {
        // three tight clusters around distant centers; the 2-D projection
        // must keep them apart (mean silhouette > 0.5)
        let mut rng = SeedRng::new(4);
        let d = 16;
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for c in 0..3usize {
            let mut center = vec![0.0; d];
            center[c] = 8.0;
            center[(c + 5) % d] = -6.0;
            for _ in 0..40 {
                for j in 0..d {
                    data.push(center[j] + rng.uniform_f64(-0.3, 0.3));
                }
                labels.push(c);
            }
        }
        let rows = labels.len();
        let pca = pca_fit(&data, rows, d, 2);
        let proj: Vec<Vec<f64>> = data.chunks(d).map(|r| pca_project(&pca, r)).collect();

        let dist = |a: &[f64], b: &[f64]| -> f64 {
            a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
        };
        let mut sil_sum = 0.0;
        for i in 0..rows {
            let mut intra = Vec::new();
            let mut inter: Vec<Vec<f64>> = vec![Vec::new(); 3];
            for j in 0..rows {
                if i == j {
                    continue;
                }
                let dij = dist(&proj[i], &proj[j]);
                if labels[j] == labels[i] {
                    intra.push(dij);
                } else {
                    inter[labels[j]].push(dij);
                }
            }
            let a = intra.iter().sum::<f64>() / intra.len() as f64;
            let b = inter
                .iter()
                .filter(|v| !v.is_empty())
                .map(|v| v.iter().sum::<f64>() / v.len() as f64)
                .fold(f64::INFINITY, f64::min);
            sil_sum += (b - a) / a.max(b);
        }
        let silhouette = sil_sum / rows as f64;
        assert!(silhouette > 0.5, "silhouette {silhouette}");
    }

    #[test]
    fn proceeds_with_fewer_samples_than_dimensions() {
        let mut rng = SeedRng::new(6);
        let (rows, d) = (3, 10);
        let mut data = vec![0.0; rows * d];
        rng.fill_uniform(&mut data, -1.0, 1.0);
        let pca = pca_fit(&data, rows, d, 2);
        assert_eq!(pca.components.len(), 2);
        // rank is at most rows-1; the projection still works
        let coords = pca_project(&pca, &data[..d]);
        assert_eq!(coords.len(), 2);
        assert!(coords.iter().all(|v| v.is_finite()));
    }
}
