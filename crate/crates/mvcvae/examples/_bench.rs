use mvcvae::dataset::Dataset;
use mvcvae::models::{ModelConfig, Variant};
use mvcvae::synthgen::{generate_dataset, GenConfig};
use mvcvae::train::{train, TrainConfig};
use std::time::Instant;

fn main() {
    mvcvae::configure_threads_from_env();
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(2);
    let lambda_kl: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0.1);
    let variant = match args.get(3).map(|s| s.as_str()).unwrap_or("baseline") {
        "a" => Variant::A,
        "b" => Variant::B,
        _ => Variant::Baseline,
    };

    let dir = std::path::PathBuf::from("/tmp/desk_ds");
    if !dir.join("manifest.json").exists() {
        let t = Instant::now();
        generate_dataset(&GenConfig { num_identities: 8, samples_per_id: 200, image_size: 32, seed: 7 }, &dir).unwrap();
        eprintln!("gen: {:.1}s", t.elapsed().as_secs_f64());
    }
    let ds = Dataset::load(&dir).unwrap();

    let cfg = TrainConfig {
        epochs,
        variant,
        model: ModelConfig { lambda_kl, variant, ..Default::default() },
        log_every: 0,
        ..TrainConfig::default()
    };
    let t = Instant::now();
    let r = train::<f32>(&cfg, &ds, None).unwrap();
    let dt = t.elapsed().as_secs_f64();
    let n = r.history.len();
    let first: Vec<_> = r.history[..n/4].iter().map(|r| r.total).collect();
    let last: Vec<_> = r.history[3*n/4..].iter().map(|r| r.total).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    eprintln!("variant {variant:?} lambda_kl {lambda_kl}: {dt:.1}s for {epochs} epochs ({:.2}s/epoch)", dt / epochs as f64);
    eprintln!("  first-quarter mean total {:.5}  last-quarter {:.5}  ratio {:.3}", mean(&first), mean(&last), mean(&last)/mean(&first));
    for i in [0, n/4, n/2, 3*n/4, n-1] {
        let row = &r.history[i];
        eprintln!("  step {:4} total {:.5} img {:.5} key {:.5} kl_i {:.4} kl_k {:.4} cons {:.5}",
            row.step, row.total, row.image_recon, row.keypoint_recon, row.kl_image, row.kl_keypoint, row.latent_consistency);
    }
}
