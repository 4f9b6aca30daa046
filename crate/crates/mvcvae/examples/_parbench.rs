use rayon::prelude::*;
use std::time::Instant;
fn main() {
    eprintln!("rayon threads: {}", rayon::current_num_threads());
    let n = 2048usize;
    let a = vec![1.0f32; n * n];
    let mut c = vec![0.0f32; n * n];
    let t = Instant::now();
    c.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for p in 0..n {
            let aip = a[i * n + p];
            for (j, cj) in row.iter_mut().enumerate() {
                *cj += aip * a[p * n + j];
            }
        }
    });
    let dt = t.elapsed().as_secs_f64();
    eprintln!("par 2048^3: {:.0} ms -> {:.1} GFLOP/s", dt * 1e3, 2.0 * (n as f64).powi(3) / dt / 1e9);

    let t = Instant::now();
    for (i, row) in c.chunks_mut(n).enumerate() {
        for p in 0..n {
            let aip = a[i * n + p];
            for (j, cj) in row.iter_mut().enumerate() {
                *cj += aip * a[p * n + j];
            }
        }
    }
    let dt = t.elapsed().as_secs_f64();
    eprintln!("ser 2048^3: {:.0} ms -> {:.1} GFLOP/s", dt * 1e3, 2.0 * (n as f64).powi(3) / dt / 1e9);
}
