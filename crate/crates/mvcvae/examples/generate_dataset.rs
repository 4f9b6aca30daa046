//! Generate a small synthetic face dataset and poke at its structure.
//!
//! ```sh
//! cargo run --release --example generate_dataset
//! ```

use mvcvae::dataset::Dataset;
use mvcvae::pgm;
use mvcvae::synthgen::{generate_dataset, grid_semantics, GenConfig};

fn main() -> mvcvae::Result<()> {
    let out = std::env::temp_dir().join("mvcvae_example_dataset");
    let config = GenConfig { num_identities: 4, samples_per_id: 50, image_size: 32, seed: 7 };
    let manifest = generate_dataset(&config, &out)?;
    println!("dataset written to {}", out.display());
    println!(
        "  {} train records + {} correspondence records ({} grid points x {} identities)",
        manifest.num_train,
        manifest.num_grid,
        manifest.grid_per_id,
        config.num_identities
    );

    let ds = Dataset::load(&out)?;
    for id in 0..2 {
        let style = ds.style(id);
        println!(
            "  identity {id}: face {:.2}x{:.2}, intensity {:.2}, contrast {:.2}",
            style.face_width, style.face_height, style.base_intensity, style.contrast
        );
    }

    // the correspondence grid holds every corner of the semantic cube
    let grid = grid_semantics();
    println!("  grid point 0 = {:?}, grid point 15 = {:?}", grid[0].0, grid[15].0);

    // dump one neutral and one extreme face of identity 0 as PGM
    for (name, g) in [("neutral", 0usize), ("extreme", 15)] {
        let idx = ds.grid_index(0, g);
        let path = out.join(format!("example_{name}.pgm"));
        pgm::write_pgm(&path, ds.image_size(), ds.image_size(), ds.image(idx))?;
        println!("  wrote {}", path.display());
    }
    Ok(())
}
