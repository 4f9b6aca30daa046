//! Cross-identity retargeting: encode a face, decode it under every other
//! identity label, and compare against the ground-truth renders.
//!
//! ```sh
//! cargo run --release --example retarget
//! ```

use mvcvae::dataset::Dataset;
use mvcvae::eval::train_variant;
use mvcvae::models::{retarget, Variant};
use mvcvae::pgm;
use mvcvae::synthgen::{generate_dataset, GenConfig};

fn main() -> mvcvae::Result<()> {
    let data_dir = std::env::temp_dir().join("mvcvae_example_retarget_data");
    let ids = 4;
    generate_dataset(
        &GenConfig { num_identities: ids, samples_per_id: 80, image_size: 32, seed: 7 },
        &data_dir,
    )?;
    let dataset = Dataset::load(&data_dir)?;

    println!("training a multi-view (variant A) model for 8 epochs...");
    let trained = train_variant::<f32>(&dataset, Variant::A, 8, 7, None)?;

    // take identity 0 doing an extreme expression (grid point 15)
    let source = 0usize;
    let x = dataset.image_tensor::<f32>(dataset.grid_index(source, 15))?;
    let size = dataset.image_size();

    // strip layout: input | retarget to id 0 | ... | retarget to id N-1
    let mut strip = vec![0.0f32; size * size * (ids + 1)];
    let paste = |strip: &mut [f32], col: usize, img: &[f32]| {
        for row in 0..size {
            strip[row * size * (ids + 1) + col * size..][..size]
                .copy_from_slice(&img[row * size..(row + 1) * size]);
        }
    };
    paste(&mut strip, 0, &x.data());
    for target in 0..ids {
        let y = retarget(&trained.model, &x, source, target)?;
        paste(&mut strip, target + 1, &y.data());

        // pixel MSE against the ground truth of the target doing the same
        // semantics, which the dataset carries for every grid point
        let truth = dataset.image(dataset.grid_index(target, 15));
        let mse: f64 = y
            .data()
            .iter()
            .zip(truth)
            .map(|(a, b)| ((a - b) as f64).powi(2))
            .sum::<f64>()
            / truth.len() as f64;
        println!("  retarget {source} -> {target}: pixel MSE vs ground truth {mse:.5}");
    }
    let out = std::env::temp_dir().join("mvcvae_retarget_strip.pgm");
    pgm::write_pgm(&out, size * (ids + 1), size, &strip)?;
    println!("wrote {}", out.display());
    Ok(())
}
