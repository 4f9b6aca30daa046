use mvcvae::dataset::Dataset;
use mvcvae::eval::{self, EvalConfig};
use mvcvae::models::Variant;
use mvcvae::synthgen::{generate_dataset, GenConfig};
use std::time::Instant;

fn main() {
    mvcvae::configure_threads_from_env();
    let args: Vec<String> = std::env::args().collect();
    let lkl: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1e-4);
    let epochs: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(20);
    let seed: u64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(7);

    let dir = std::path::PathBuf::from("/tmp/desk_ds");
    if !dir.join("manifest.json").exists() {
        generate_dataset(&GenConfig { num_identities: 8, samples_per_id: 200, image_size: 32, seed: 7 }, &dir).unwrap();
    }
    let ds = Dataset::load(&dir).unwrap();
    let ecfg = EvalConfig::default();

    for variant in [Variant::Baseline, Variant::A, Variant::B] {
        let t = Instant::now();
        let r = eval::train_variant::<f32>(&ds, variant, epochs, seed, Some((lkl, 1.0, 1.0))).unwrap();
        let train_t = t.elapsed().as_secs_f64();
        let last = &r.history[r.history.len() - 1];
        let (l2, _) = eval::correspondence_l2_error(&r.model, &ds).unwrap();
        let (id_acc, sem_r2) = eval::latent_probes(&r.model, &ds, &ecfg).unwrap();
        let gap = if variant == Variant::A {
            eval::mean_latent_gap(&r.model, &ds).unwrap()
        } else { f64::NAN };
        println!(
            "lkl {lkl} seed {seed} {variant}: train {train_t:.0}s  kl_end {:.3}  recon_end {:.5}  corrL2 {l2:.6}  idProbe {id_acc:.3}  semR2 {sem_r2:.3}  gap {gap:.3}",
            last.kl_image, last.image_recon
        );
    }
}
