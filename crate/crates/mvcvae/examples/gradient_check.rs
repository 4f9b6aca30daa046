//! Verify the autodiff engine against central differences, op by op and
//! through a complete model loss, at f64.
//!
//! ```sh
//! cargo run --release --example gradient_check
//! ```

use mvcvae::dataset::Batch;
use mvcvae::models::{EpsStreams, ModelConfig, MultiViewModel, Variant};
use mvcvae::rng::SeedRng;
use mvcvae::tensor::{grad_check, Tensor};

fn main() -> mvcvae::Result<()> {
    let mut rng = SeedRng::new(3);

    // a single composite expression covering most elementwise ops
    let mut xv = vec![0.0f64; 12];
    rng.fill_uniform(&mut xv, 0.2, 1.5);
    let x = Tensor::param(xv, &[3, 4])?;
    let w = Tensor::param(vec![0.3, -0.2, 0.5, 0.1, -0.4, 0.2, 0.6, -0.1], &[4, 2])?;
    let err = grad_check(
        |ps: &[Tensor<f64>]| {
            let h = ps[0].matmul(&ps[1])?;
            let g = h.sigmoid().mul(&h.exp())?.add(&h.leaky_relu(0.2))?;
            Ok(g.square()?.mean())
        },
        &[x, w],
        1e-5,
    )?;
    println!("composite elementwise/matmul graph: max relative error {err:.2e}");

    // convolution round trip
    let mut cv = vec![0.0f64; 2 * 2 * 8 * 8];
    rng.fill_uniform(&mut cv, -1.0, 1.0);
    let x = Tensor::param(cv, &[2, 2, 8, 8])?;
    let wt = Tensor::param(vec![0.05; 3 * 2 * 16], &[3, 2, 4, 4])?;
    let b = Tensor::param(vec![0.0; 3], &[3])?;
    let wt2 = Tensor::param(vec![0.05; 3 * 2 * 16], &[3, 2, 4, 4])?;
    let b2 = Tensor::param(vec![0.0; 2], &[2])?;
    let err = grad_check(
        |ps: &[Tensor<f64>]| {
            let y = ps[0].conv2d(&ps[1], &ps[2], 2, 1)?;
            let back = y.conv_transpose2d(&ps[3], &ps[4], 2, 1)?;
            Ok(back.abs().mean())
        },
        &[x, wt, b, wt2, b2],
        1e-5,
    )?;
    println!("conv2d -> conv_transpose2d chain:    max relative error {err:.2e}");

    // the full variant-A loss on a tiny model
    let config = ModelConfig {
        image_size: 16,
        conv_stages: 2,
        base_channels: 4,
        latent_dim: 8,
        num_identities: 3,
        keypoint_dim: 6,
        keypoint_hidden: 16,
        keypoint_layers: 2,
        variant: Variant::A,
        ..Default::default()
    };
    let model = MultiViewModel::<f64>::new(&config, 7)?;
    let mut images = vec![0.0f64; 2 * 256];
    let mut keypoints = vec![0.0f64; 2 * 6];
    rng.fill_uniform(&mut images, 0.0, 1.0);
    rng.fill_uniform(&mut keypoints, -1.0, 1.0);
    let batch = Batch {
        images: Tensor::from_vec(images, &[2, 1, 16, 16])?,
        keypoints: Tensor::from_vec(keypoints, &[2, 6])?,
        labels: vec![0, 1],
    };
    let params = model.params();
    println!("checking the full variant-A loss over {} parameters...", params.len());
    let err = grad_check(
        |_| {
            let mut eps = EpsStreams::for_seed(40);
            Ok(model.training_loss(&batch, &mut eps)?.total)
        },
        &params,
        1e-5,
    )?;
    println!("full multi-view loss:                max relative error {err:.2e}");
    Ok(())
}
