//! Export latent embeddings and a 2-D PCA projection for visualization.
//!
//! ```sh
//! cargo run --release --example export_embeddings
//! ```

use mvcvae::dataset::Dataset;
use mvcvae::eval::{export_embeddings, train_variant};
use mvcvae::models::Variant;
use mvcvae::synthgen::{generate_dataset, GenConfig};

fn main() -> mvcvae::Result<()> {
    let data_dir = std::env::temp_dir().join("mvcvae_example_embed_data");
    generate_dataset(
        &GenConfig { num_identities: 4, samples_per_id: 60, image_size: 32, seed: 7 },
        &data_dir,
    )?;
    let dataset = Dataset::load(&data_dir)?;

    println!("training variant A for 6 epochs...");
    let trained = train_variant::<f32>(&dataset, Variant::A, 6, 7, None)?;

    let out = std::env::temp_dir().join("mvcvae_example_embeddings");
    let pca = export_embeddings(&trained.model, &dataset, &out)?;
    println!("wrote {}/embeddings.csv and pca.csv", out.display());
    println!(
        "top eigenvalues: {:.4} {:.4} (ratio {:.1}x)",
        pca.eigenvalues[0],
        pca.eigenvalues[1],
        pca.eigenvalues[0] / pca.eigenvalues[1].max(1e-12)
    );
    Ok(())
}
