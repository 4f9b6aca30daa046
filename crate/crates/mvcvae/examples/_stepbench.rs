use mvcvae::dataset::Dataset;
use mvcvae::models::*;
use mvcvae::nn::{zero_grads, Adam, AdamHyper};
use mvcvae::train::TrainConfig;
use std::time::Instant;

fn main() {
    mvcvae::configure_threads_from_env();
    let dir = std::path::PathBuf::from("/tmp/desk_ds");
    let ds = Dataset::load(&dir).unwrap();
    let cfg = TrainConfig::default();
    let model = MultiViewModel::<f32>::new(&cfg.model, 7).unwrap();
    let params = model.params();
    let mut opt = Adam::new(AdamHyper::with_lr(1e-3), &params);
    let mut eps = EpsStreams::for_seed(7);
    let idx: Vec<usize> = (0..32).collect();

    for label in ["warm", "timed"] {
        let reps = 10;
        let (mut t_batch, mut t_fwd, mut t_bwd, mut t_opt) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..reps {
            let t0 = Instant::now();
            let batch = ds.batch::<f32>(&idx).unwrap();
            let t1 = Instant::now();
            let lb = model.training_loss(&batch, &mut eps).unwrap();
            let t2 = Instant::now();
            lb.total.backward().unwrap();
            let t3 = Instant::now();
            opt.step(&params).unwrap();
            zero_grads(&params);
            let t4 = Instant::now();
            t_batch += (t1 - t0).as_secs_f64();
            t_fwd += (t2 - t1).as_secs_f64();
            t_bwd += (t3 - t2).as_secs_f64();
            t_opt += (t4 - t3).as_secs_f64();
        }
        eprintln!("{label}: batch {:.1}ms fwd {:.1}ms bwd {:.1}ms opt {:.1}ms   total {:.1}ms",
            t_batch / reps as f64 * 1e3, t_fwd / reps as f64 * 1e3,
            t_bwd / reps as f64 * 1e3, t_opt / reps as f64 * 1e3,
            (t_batch + t_fwd + t_bwd + t_opt) / reps as f64 * 1e3);
    }
}
