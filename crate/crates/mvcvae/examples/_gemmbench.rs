use std::time::Instant;
use mvcvae::tensor::Tensor;

fn main() {
    // rayon engagement check
    let pool_threads = rayon::current_num_threads();
    eprintln!("rayon threads: {pool_threads}");

    let n = 512;
    let a = Tensor::<f32>::from_vec(vec![0.5; n * n], &[n, n]).unwrap();
    let b = Tensor::<f32>::from_vec(vec![0.25; n * n], &[n, n]).unwrap();
    // warm
    let _ = a.matmul(&b).unwrap();
    let t = Instant::now();
    let reps = 20;
    for _ in 0..reps {
        let _ = a.matmul(&b).unwrap();
    }
    let dt = t.elapsed().as_secs_f64() / reps as f64;
    let flops = 2.0 * (n as f64).powi(3);
    eprintln!("matmul {n}^3: {:.1} ms -> {:.2} GFLOP/s", dt * 1e3, flops / dt / 1e9);

    // conv stage-2-like: batch 32, 32->64 channels, 16->8
    let x = Tensor::<f32>::from_vec(vec![0.1; 32 * 32 * 16 * 16], &[32, 32, 16, 16]).unwrap();
    let w = Tensor::<f32>::from_vec(vec![0.01; 64 * 32 * 16], &[64, 32, 4, 4]).unwrap();
    let bias = Tensor::<f32>::zeros(&[64]);
    let _ = x.conv2d(&w, &bias, 2, 1).unwrap();
    let t = Instant::now();
    for _ in 0..reps {
        let _ = x.conv2d(&w, &bias, 2, 1).unwrap();
    }
    let dt = t.elapsed().as_secs_f64() / reps as f64;
    let flops = 2.0 * (32 * 64 * 64 * 32 * 16) as f64;
    eprintln!("conv2d stage2 fwd: {:.1} ms -> {:.2} GFLOP/s", dt * 1e3, flops / dt / 1e9);
}
