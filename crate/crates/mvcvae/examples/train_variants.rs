//! Train each model variant for a few epochs on a small dataset and watch
//! the loss components move.
//!
//! ```sh
//! cargo run --release --example train_variants
//! ```

use mvcvae::dataset::Dataset;
use mvcvae::models::{ModelConfig, Variant};
use mvcvae::synthgen::{generate_dataset, GenConfig};
use mvcvae::train::{train, TrainConfig};

fn main() -> mvcvae::Result<()> {
    let data_dir = std::env::temp_dir().join("mvcvae_example_train_data");
    generate_dataset(
        &GenConfig { num_identities: 4, samples_per_id: 60, image_size: 32, seed: 7 },
        &data_dir,
    )?;
    let dataset = Dataset::load(&data_dir)?;

    for variant in [Variant::Baseline, Variant::A, Variant::B] {
        let cfg = TrainConfig {
            epochs: 3,
            seed: 7,
            variant,
            model: ModelConfig {
                num_identities: 4,
                variant,
                ..Default::default()
            },
            ..TrainConfig::default()
        };
        let result = train::<f32>(&cfg, &dataset, None)?;
        let first = &result.history[0];
        let last = result.history.last().unwrap();
        println!("variant {variant}:");
        println!(
            "  step 1    total {:.4}  image {:.4}  keypoint {:.4}  kl {:.3}  consistency {:.4}",
            first.total, first.image_recon, first.keypoint_recon, first.kl_image, first.latent_consistency
        );
        println!(
            "  step {:<4} total {:.4}  image {:.4}  keypoint {:.4}  kl {:.3}  consistency {:.4}",
            last.step, last.total, last.image_recon, last.keypoint_recon, last.kl_image, last.latent_consistency
        );
    }
    Ok(())
}
