use mvcvae::dataset::Dataset;
use mvcvae::synthgen::{generate_dataset, GenConfig};
use nalgebra::{DMatrix, DVector};

fn main() {
    let dir = tempfile::tempdir().unwrap();
    for (ids, samples) in [(4usize, 40usize), (8, 200)] {
        generate_dataset(&GenConfig { num_identities: ids, samples_per_id: samples, image_size: 16, seed: 21 }, dir.path()).unwrap();
        let ds = Dataset::load(dir.path()).unwrap();
        let rows = ds.num_train();
        let dim = ds.keypoint_dim();
        // design matrix with bias column
        let mut x = DMatrix::<f64>::zeros(rows, dim + 1);
        let mut ys = vec![DVector::<f64>::zeros(rows); 4];
        for i in 0..rows {
            for j in 0..dim { x[(i, j)] = ds.keypoint(i)[j] as f64; }
            x[(i, dim)] = 1.0;
            for c in 0..4 { ys[c][i] = ds.semantic(i)[c] as f64; }
        }
        let svd = x.clone().svd(true, true);
        let mut r2s = Vec::new();
        for c in 0..4 {
            let beta = svd.solve(&ys[c], 1e-10).unwrap();
            let pred = &x * beta;
            let mean = ys[c].mean();
            let ss_tot: f64 = ys[c].iter().map(|v| (v - mean).powi(2)).sum();
            let ss_res: f64 = ys[c].iter().zip(pred.iter()).map(|(a, b)| (a - b).powi(2)).sum();
            r2s.push(1.0 - ss_res / ss_tot);
        }
        println!("{ids} ids x {samples}: exact LS in-sample R2 per factor: {:?}", r2s.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>());
    }
}
