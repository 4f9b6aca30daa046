//! Handle a person the model never saw: regress their images to a soft
//! combination of the training identities and decode with that label.
//!
//! ```sh
//! cargo run --release --example new_identity
//! ```

use mvcvae::dataset::Dataset;
use mvcvae::eval::{train_identity_classifier, train_variant, EvalConfig};
use mvcvae::models::{regress_new_identity, retarget_soft, Variant};
use mvcvae::pgm;
use mvcvae::rng::SeedRng;
use mvcvae::synthgen::{
    generate_dataset, keypoints_from, render, GenConfig, IdentityStyle, SemanticFactors,
};
use mvcvae::tensor::Tensor;

fn main() -> mvcvae::Result<()> {
    let data_dir = std::env::temp_dir().join("mvcvae_example_newid_data");
    let seed = 7;
    generate_dataset(
        &GenConfig { num_identities: 4, samples_per_id: 80, image_size: 32, seed },
        &data_dir,
    )?;
    let dataset = Dataset::load(&data_dir)?;
    let size = dataset.image_size();

    println!("training variant A and the identity classifier...");
    let trained = train_variant::<f32>(&dataset, Variant::A, 8, seed, None)?;
    let classifier = train_identity_classifier::<f32>(&dataset, &EvalConfig::default())?;
    println!("  classifier ground-truth accuracy: {:.3}", classifier.gt_accuracy);

    // fabricate an unseen person halfway between identities 0 and 1
    let blended = IdentityStyle::blend(dataset.style(0), dataset.style(1), 0.5);
    let mut rng = SeedRng::new(99);
    let mut pixels = Vec::new();
    let count = 16;
    for _ in 0..count {
        let s = SemanticFactors::uniform(&mut rng);
        let k = keypoints_from(&s, &blended);
        pixels.extend(render(&k, &blended, size));
    }
    let images = Tensor::from_vec(pixels, &[count, 1, size, size])?;

    let soft = regress_new_identity(&classifier.net, &images)?;
    println!("soft label over known identities:");
    for (i, w) in soft.iter().enumerate() {
        println!("  id {i}: {w:.3}");
    }
    let top2: f64 = soft[0] + soft[1];
    println!("mass on the two parent identities: {top2:.3}");

    // retarget one training expression onto the new person
    let x = dataset.image_tensor::<f32>(dataset.grid_index(2, 15))?;
    let y = retarget_soft(&trained.model, &x, &soft)?;
    let out = std::env::temp_dir().join("mvcvae_new_identity.pgm");
    pgm::write_pgm(&out, size, size, &y.data())?;
    println!("wrote {}", out.display());
    Ok(())
}
