//! The identity-conditioned image CVAE baseline, the keypoint CVAE, the two
//! multi-view training variants and their losses, and the downstream
//! retargeting procedures.
//!
//! Variant A trains an image CVAE and a keypoint CVAE jointly, tying their
//! latent codes with a squared-distance consistency penalty. Variant B
//! trains a single image CVAE whose latent also has to reconstruct the
//! keypoints through a deliberately weaker decoder. Either way the identity
//! label conditions only the decoders; encoders never see it, so inference
//! on unlabeled images works unchanged.

mod classifier;
mod image;
mod keypoint;
mod procedures;

pub use classifier::IdentityClassifier;
pub use image::ImageCvae;
pub use keypoint::{KeypointCvae, KeypointHead};
pub use procedures::{interpolate, reconstruct, regress_new_identity, retarget, retarget_soft};

use serde::{Deserialize, Serialize};

use crate::dataset::Batch;
use crate::error::{Error, Result};
use crate::nn::{kl_standard_normal, l1_loss};
use crate::rng::{streams, SeedRng};
use crate::tensor::{Element, Tensor};

/// The identity embedding maps 1-hot labels to a code of this fixed width,
/// regardless of the latent dimension.
pub const ID_EMBED_DIM: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Baseline,
    A,
    B,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Variant::Baseline => "baseline",
            Variant::A => "a",
            Variant::B => "b",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Variant::Baseline),
            "a" => Ok(Variant::A),
            "b" => Ok(Variant::B),
            other => Err(Error::contract(format!(
                "unknown variant '{other}' (expected baseline|a|b)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Square input resolution; a power of two.
    pub image_size: usize,
    /// Number of stride-2 stages in the image encoder/decoder, each halving
    /// the resolution. `image_size / 2^conv_stages` must stay >= 4.
    pub conv_stages: usize,
    /// Channels after the first stage; doubled at each following stage.
    pub base_channels: usize,
    pub latent_dim: usize,
    pub num_identities: usize,
    pub keypoint_dim: usize,
    pub keypoint_hidden: usize,
    pub keypoint_layers: usize,
    pub lambda_kl: f64,
    pub lambda_z: f64,
    pub lambda_key: f64,
    pub variant: Variant,
}

impl Default for ModelConfig {
    /// Desk-scale geometry: 32x32 inputs through three halving stages keep
    /// the paper's 4x4 bottleneck while training in minutes on a CPU.
    fn default() -> Self {
        ModelConfig {
            image_size: 32,
            conv_stages: 3,
            base_channels: 32,
            latent_dim: 128,
            num_identities: 8,
            keypoint_dim: 20,
            keypoint_hidden: 500,
            keypoint_layers: 4,
            lambda_kl: 0.1,
            lambda_z: 1.0,
            lambda_key: 1.0,
            variant: Variant::Baseline,
        }
    }
}

impl ModelConfig {
    /// Full-scale geometry: 256x256 through six halving stages.
    pub fn paper() -> Self {
        ModelConfig {
            image_size: 256,
            conv_stages: 6,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.image_size.is_power_of_two() {
            return Err(Error::contract(format!(
                "image_size {} is not a power of two",
                self.image_size
            )));
        }
        if self.conv_stages == 0 || self.image_size >> self.conv_stages < 4 {
            return Err(Error::contract(format!(
                "image_size {} over {} halving stages leaves a bottleneck below 4",
                self.image_size, self.conv_stages
            )));
        }
        if self.latent_dim == 0 || self.base_channels == 0 {
            return Err(Error::contract("latent_dim and base_channels must be positive"));
        }
        if self.num_identities < 2 {
            return Err(Error::contract(format!(
                "num_identities {} < 2",
                self.num_identities
            )));
        }
        if self.variant != Variant::Baseline
            && (self.keypoint_dim == 0 || self.keypoint_hidden == 0 || self.keypoint_layers == 0)
        {
            return Err(Error::contract(
                "multi-view variants need positive keypoint geometry",
            ));
        }
        for (name, v) in [
            ("lambda_kl", self.lambda_kl),
            ("lambda_z", self.lambda_z),
            ("lambda_key", self.lambda_key),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::contract(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        Ok(())
    }

    /// Spatial extent at the encoder bottleneck.
    pub fn bottleneck_extent(&self) -> usize {
        self.image_size >> self.conv_stages
    }

    /// Channel count entering stage `i` (stage 0 consumes the image).
    pub fn stage_in_channels(&self, i: usize) -> usize {
        if i == 0 {
            1
        } else {
            self.base_channels << (i - 1)
        }
    }

    pub fn stage_out_channels(&self, i: usize) -> usize {
        self.base_channels << i
    }

    pub fn top_channels(&self) -> usize {
        self.stage_out_channels(self.conv_stages - 1)
    }

    /// Flattened feature width at the bottleneck.
    pub fn flat_dim(&self) -> usize {
        self.top_channels() * self.bottleneck_extent() * self.bottleneck_extent()
    }
}

/// Diagonal-Gaussian posterior plus one realization. During training `z`
/// is sampled by reparameterization; at inference `z == mu`.
pub struct LatentCode<E: Element> {
    pub mu: Tensor<E>,
    pub logvar: Tensor<E>,
    pub z: Tensor<E>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// 1-hot identity conditioning: `weight: [N, 128]`, standard-normal init.
pub struct IdentityEmbedding<E: Element> {
    pub weight: Tensor<E>,
    num_identities: usize,
}

impl<E: Element> IdentityEmbedding<E> {
    pub fn new(num_identities: usize, rng: &mut SeedRng) -> Self {
        IdentityEmbedding {
            weight: crate::nn::normal_init(&[num_identities, ID_EMBED_DIM], rng),
            num_identities,
        }
    }

    pub fn num_identities(&self) -> usize {
        self.num_identities
    }

    /// Codes for a batch of hard labels.
    pub fn forward(&self, labels: &[usize]) -> Result<Tensor<E>> {
        let mut onehot = vec![E::zero(); labels.len() * self.num_identities];
        for (i, &l) in labels.iter().enumerate() {
            if l >= self.num_identities {
                return Err(Error::contract(format!(
                    "identity index {l} out of range for {} identities",
                    self.num_identities
                )));
            }
            onehot[i * self.num_identities + l] = E::one();
        }
        let onehot = Tensor::from_vec(onehot, &[labels.len(), self.num_identities])?;
        onehot.matmul(&self.weight)
    }

    /// Codes for soft labels `[B, N]` (convex combinations of identities).
    pub fn forward_soft(&self, soft: &Tensor<E>) -> Result<Tensor<E>> {
        if soft.shape().len() != 2 || soft.shape()[1] != self.num_identities {
            return Err(Error::contract(format!(
                "soft labels {:?} do not match {} identities",
                soft.shape(),
                self.num_identities
            )));
        }
        soft.matmul(&self.weight)
    }
}

/// Reparameterization-noise streams, one per branch, so the image branch
/// consumes an identical sequence whichever variant is training.
pub struct EpsStreams {
    pub image: SeedRng,
    pub keypoint: SeedRng,
}

impl EpsStreams {
    pub fn for_seed(seed: u64) -> Self {
        EpsStreams {
            image: SeedRng::stream(seed, streams::IMAGE_EPS),
            keypoint: SeedRng::stream(seed, streams::KEYPOINT_EPS),
        }
    }
}

/// Per-term values of one loss evaluation. `total` stays attached to the
/// graph for backward; the components are plain numbers for logging.
pub struct LossBreakdown<E: Element> {
    pub total: Tensor<E>,
    pub image_recon: f64,
    pub keypoint_recon: f64,
    pub kl_image: f64,
    pub kl_keypoint: f64,
    pub latent_consistency: f64,
}

impl<E: Element> LossBreakdown<E> {
    pub fn total_value(&self) -> f64 {
        self.total.item().as_f64()
    }

    pub fn components(&self) -> [(&'static str, f64); 5] {
        [
            ("image_recon", self.image_recon),
            ("keypoint_recon", self.keypoint_recon),
            ("kl_image", self.kl_image),
            ("kl_keypoint", self.kl_keypoint),
            ("latent_consistency", self.latent_consistency),
        ]
    }
}

/// A model instance for any variant: the image CVAE always exists; the
/// keypoint CVAE (variant A) or the keypoint head (variant B) join it.
pub struct MultiViewModel<E: Element> {
    pub config: ModelConfig,
    pub image: ImageCvae<E>,
    pub keypoint: Option<KeypointCvae<E>>,
    pub keypoint_head: Option<KeypointHead<E>>,
}

impl<E: Element> MultiViewModel<E> {
    /// Build a fresh model. The image branch always draws its parameters
    /// from the same seed stream, so models of different variants share
    /// identical image-branch initialization for a given seed.
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut image_rng = SeedRng::stream(seed, streams::IMAGE_INIT);
        let image = ImageCvae::new_conditional(config, &mut image_rng);
        let mut key_rng = SeedRng::stream(seed, streams::KEYPOINT_INIT);
        let (keypoint, keypoint_head) = match config.variant {
            Variant::Baseline => (None, None),
            Variant::A => (Some(KeypointCvae::new(config, &mut key_rng)), None),
            Variant::B => (
                None,
                Some(KeypointHead::new(config.latent_dim + ID_EMBED_DIM, config.keypoint_dim, &mut key_rng)),
            ),
        };
        Ok(MultiViewModel { config: config.clone(), image, keypoint, keypoint_head })
    }

    pub fn params(&self) -> Vec<Tensor<E>> {
        self.named_params().into_iter().map(|(_, t)| t).collect()
    }

    pub fn named_params(&self) -> Vec<(String, Tensor<E>)> {
        let mut out = self.image.named_params("image");
        if let Some(k) = &self.keypoint {
            out.extend(k.named_params("keypoint"));
        }
        if let Some(h) = &self.keypoint_head {
            out.extend(h.named_params("keypoint_head"));
        }
        out
    }

    /// The active variant's training loss on one batch.
    pub fn training_loss(&self, batch: &Batch<E>, eps: &mut EpsStreams) -> Result<LossBreakdown<E>> {
        match self.config.variant {
            Variant::Baseline => loss_baseline(self, batch, eps),
            Variant::A => loss_variant_a(self, batch, eps),
            Variant::B => loss_variant_b(self, batch, eps),
        }
    }
}

/// Baseline CVAE loss: `l1(recon, x) + lambda_kl * KL`.
pub fn loss_baseline<E: Element>(
    model: &MultiViewModel<E>,
    batch: &Batch<E>,
    eps: &mut EpsStreams,
) -> Result<LossBreakdown<E>> {
    let (recon, code) = model.image.forward(&batch.images, &batch.labels, Mode::Train, &mut eps.image)?;
    let l1 = l1_loss(&recon, &batch.images)?;
    let kl = kl_standard_normal(&code.mu, &code.logvar)?;
    let image_recon = l1.item().as_f64();
    let kl_image = kl.item().as_f64();
    let lambda_kl = model.config.lambda_kl;
    let total = if lambda_kl != 0.0 {
        l1.add(&kl.scale(E::of_f64(lambda_kl)))?
    } else {
        l1
    };
    Ok(LossBreakdown {
        total,
        image_recon,
        keypoint_recon: 0.0,
        kl_image,
        kl_keypoint: 0.0,
        latent_consistency: 0.0,
    })
}

/// Variant A: two CVAEs trained in parallel with a latent-consistency
/// penalty `lambda_z * mean_batch sum_dims (z_x - z_K)^2` tying them.
pub fn loss_variant_a<E: Element>(
    model: &MultiViewModel<E>,
    batch: &Batch<E>,
    eps: &mut EpsStreams,
) -> Result<LossBreakdown<E>> {
    let keypoint_model = model
        .keypoint
        .as_ref()
        .ok_or_else(|| Error::contract("variant A loss on a model without a keypoint branch"))?;
    let (recon_x, code_x) =
        model.image.forward(&batch.images, &batch.labels, Mode::Train, &mut eps.image)?;
    let (recon_k, code_k) =
        keypoint_model.forward(&batch.keypoints, &batch.labels, Mode::Train, &mut eps.keypoint)?;

    let l1_img = l1_loss(&recon_x, &batch.images)?;
    let l1_key = l1_loss(&recon_k, &batch.keypoints)?;
    let kl_img = kl_standard_normal(&code_x.mu, &code_x.logvar)?;
    let kl_key = kl_standard_normal(&code_k.mu, &code_k.logvar)?;

    let image_recon = l1_img.item().as_f64();
    let keypoint_recon = l1_key.item().as_f64();
    let kl_image = kl_img.item().as_f64();
    let kl_keypoint = kl_key.item().as_f64();

    let lambda_kl = model.config.lambda_kl;
    let lambda_z = model.config.lambda_z;
    let mut total = l1_img.add(&l1_key)?;
    if lambda_kl != 0.0 {
        total = total.add(&kl_img.add(&kl_key)?.scale(E::of_f64(lambda_kl)))?;
    }
    let mut latent_consistency = 0.0;
    if lambda_z != 0.0 {
        let batch_n = batch.images.shape()[0];
        let cons = code_x
            .z
            .sub(&code_k.z)?
            .square()?
            .sum()
            .scale(E::of_f64(1.0 / batch_n as f64));
        latent_consistency = cons.item().as_f64();
        total = total.add(&cons.scale(E::of_f64(lambda_z)))?;
    }
    Ok(LossBreakdown {
        total,
        image_recon,
        keypoint_recon,
        kl_image,
        kl_keypoint,
        latent_consistency,
    })
}

/// Variant B: one encoder, two decoders; the latent must also reconstruct
/// the keypoints through the weaker head.
pub fn loss_variant_b<E: Element>(
    model: &MultiViewModel<E>,
    batch: &Batch<E>,
    eps: &mut EpsStreams,
) -> Result<LossBreakdown<E>> {
    let head = model
        .keypoint_head
        .as_ref()
        .ok_or_else(|| Error::contract("variant B loss on a model without a keypoint head"))?;
    let (mu, logvar) = model.image.encode(&batch.images)?;
    let z = crate::nn::reparameterize(&mu, &logvar, &mut eps.image)?;
    let z_c = model.image.embed_labels(&batch.labels)?;
    let dec_in = z.concat(&z_c, 1)?;
    let recon_x = model.image.decode_code(&dec_in)?;
    let l1_img = l1_loss(&recon_x, &batch.images)?;
    let kl_img = kl_standard_normal(&mu, &logvar)?;

    let image_recon = l1_img.item().as_f64();
    let kl_image = kl_img.item().as_f64();

    let lambda_kl = model.config.lambda_kl;
    let lambda_key = model.config.lambda_key;
    let mut total = l1_img;
    let mut keypoint_recon = 0.0;
    if lambda_key != 0.0 {
        let recon_k = head.forward(&dec_in)?;
        let l1_key = l1_loss(&recon_k, &batch.keypoints)?;
        keypoint_recon = l1_key.item().as_f64();
        total = total.add(&l1_key.scale(E::of_f64(lambda_key)))?;
    }
    if lambda_kl != 0.0 {
        total = total.add(&kl_img.scale(E::of_f64(lambda_kl)))?;
    }
    Ok(LossBreakdown {
        total,
        image_recon,
        keypoint_recon,
        kl_image,
        kl_keypoint: 0.0,
        latent_consistency: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::no_grad;

    /// Tiny geometry for fast f64 checks.
    fn tiny_config(variant: Variant) -> ModelConfig {
        ModelConfig {
            image_size: 16,
            conv_stages: 2,
            base_channels: 4,
            latent_dim: 8,
            num_identities: 3,
            keypoint_dim: 6,
            keypoint_hidden: 16,
            keypoint_layers: 2,
            variant,
            ..Default::default()
        }
    }

    fn tiny_batch<E: Element>(config: &ModelConfig, seed: u64, b: usize) -> Batch<E> {
        let mut rng = SeedRng::new(seed);
        let pixels = config.image_size * config.image_size;
        let mut images = vec![E::zero(); b * pixels];
        rng.fill_uniform(&mut images, 0.0, 1.0);
        let mut keypoints = vec![E::zero(); b * config.keypoint_dim];
        rng.fill_uniform(&mut keypoints, -1.0, 1.0);
        Batch {
            images: Tensor::from_vec(images, &[b, 1, config.image_size, config.image_size]).unwrap(),
            keypoints: Tensor::from_vec(keypoints, &[b, config.keypoint_dim]).unwrap(),
            labels: (0..b).map(|i| i % config.num_identities).collect(),
        }
    }

    #[test]
    fn config_geometry_validation() {
        assert!(ModelConfig::default().validate().is_ok());
        assert!(ModelConfig::paper().validate().is_ok());
        // four halvings from 32 would leave a 2x2 bottleneck
        let bad = ModelConfig { conv_stages: 4, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = ModelConfig { image_size: 48, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = ModelConfig { num_identities: 1, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn bottleneck_is_four_for_both_geometries() {
        assert_eq!(ModelConfig::default().bottleneck_extent(), 4);
        assert_eq!(ModelConfig::paper().bottleneck_extent(), 4);
    }

    #[test]
    fn encoder_is_identity_blind() {
        let config = tiny_config(Variant::Baseline);
        let model = MultiViewModel::<f64>::new(&config, 3).unwrap();
        let batch = tiny_batch::<f64>(&config, 1, 2);
        let mut rng_a = SeedRng::new(0);
        let mut rng_b = SeedRng::new(0);
        let (_, code_a) = model.image.forward(&batch.images, &[0, 0], Mode::Infer, &mut rng_a).unwrap();
        let (_, code_b) = model.image.forward(&batch.images, &[2, 1], Mode::Infer, &mut rng_b).unwrap();
        assert_eq!(code_a.mu.to_vec(), code_b.mu.to_vec());
        assert_eq!(code_a.logvar.to_vec(), code_b.logvar.to_vec());
    }

    #[test]
    fn infer_mode_is_deterministic() {
        let config = tiny_config(Variant::Baseline);
        let model = MultiViewModel::<f64>::new(&config, 3).unwrap();
        let batch = tiny_batch::<f64>(&config, 1, 2);
        let run = || {
            let mut rng = SeedRng::new(999);
            no_grad(|| model.image.forward(&batch.images, &batch.labels, Mode::Infer, &mut rng))
                .unwrap()
                .0
                .to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn decoder_output_in_unit_range() {
        let config = tiny_config(Variant::Baseline);
        let model = MultiViewModel::<f32>::new(&config, 5).unwrap();
        let batch = tiny_batch::<f32>(&config, 2, 3);
        let mut rng = SeedRng::new(0);
        let (recon, _) = model.image.forward(&batch.images, &batch.labels, Mode::Infer, &mut rng).unwrap();
        assert_eq!(recon.shape(), batch.images.shape());
        assert!(recon.to_vec().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn invalid_identity_rejected() {
        let config = tiny_config(Variant::Baseline);
        let model = MultiViewModel::<f32>::new(&config, 5).unwrap();
        let batch = tiny_batch::<f32>(&config, 2, 1);
        let mut rng = SeedRng::new(0);
        let err = model.image.forward(&batch.images, &[7], Mode::Infer, &mut rng);
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn keypoint_dim_mismatch_rejected() {
        let config = tiny_config(Variant::A);
        let model = MultiViewModel::<f32>::new(&config, 5).unwrap();
        let bad = Tensor::<f32>::zeros(&[2, 9]);
        let err = model.keypoint.as_ref().unwrap().encode(&bad);
        assert!(matches!(err, Err(Error::Contract(_))));
    }

    #[test]
    fn keypoint_cvae_parameter_count_matches_architecture() {
        let config = ModelConfig { variant: Variant::A, ..Default::default() };
        let model = MultiViewModel::<f32>::new(&config, 1).unwrap();
        let (h, l, k, n, layers) = (
            config.keypoint_hidden,
            config.latent_dim,
            config.keypoint_dim,
            config.num_identities,
            config.keypoint_layers,
        );
        let trunk = |in_dim: usize| (in_dim * h + h) + (layers - 1) * (h * h + h);
        let expect = trunk(k)                  // encoder: 4 FC layers, 500 wide
            + 2 * (h * l + l)                  // mu / logvar heads
            + n * ID_EMBED_DIM                 // identity embedding
            + trunk(l + ID_EMBED_DIM)          // decoder trunk
            + (h * k + k);                     // keypoint output
        let actual: usize = model
            .named_params()
            .iter()
            .filter(|(name, _)| name.starts_with("keypoint."))
            .map(|(_, t)| t.numel())
            .sum();
        assert_eq!(actual, expect);
    }

    #[test]
    fn loss_components_recombine() {
        for variant in [Variant::Baseline, Variant::A, Variant::B] {
            let config = tiny_config(variant);
            let model = MultiViewModel::<f64>::new(&config, 11).unwrap();
            let batch = tiny_batch::<f64>(&config, 3, 4);
            let mut eps = EpsStreams::for_seed(11);
            let lb = model.training_loss(&batch, &mut eps).unwrap();
            let expect = lb.image_recon
                + lb.keypoint_recon * if variant == Variant::B { config.lambda_key } else { 1.0 }
                + config.lambda_kl * (lb.kl_image + lb.kl_keypoint)
                + config.lambda_z * lb.latent_consistency;
            let total = lb.total_value();
            assert!(
                (total - expect).abs() <= 1e-6 * expect.abs().max(1.0),
                "{variant}: total {total} vs recombined {expect}"
            );
        }
    }

    #[test]
    fn zero_lambda_kl_reduces_total_to_recon() {
        let config = ModelConfig { lambda_kl: 0.0, ..tiny_config(Variant::Baseline) };
        let model = MultiViewModel::<f64>::new(&config, 2).unwrap();
        let batch = tiny_batch::<f64>(&config, 1, 2);
        let mut eps = EpsStreams::for_seed(2);
        let lb = model.training_loss(&batch, &mut eps).unwrap();
        assert_eq!(lb.total_value(), lb.image_recon);
    }

    /// With the coupling weight at zero, the image branch of a multi-view
    /// model must receive gradients identical to the baseline's, bit for
    /// bit, under the same seed and data.
    fn assert_image_branch_matches_baseline(variant: Variant, zeroed: ModelConfig) {
        let base_cfg = ModelConfig { variant: Variant::Baseline, ..zeroed.clone() };
        let seed = 17;
        let baseline = MultiViewModel::<f64>::new(&base_cfg, seed).unwrap();
        let multi = MultiViewModel::<f64>::new(&zeroed, seed).unwrap();
        let batch = tiny_batch::<f64>(&base_cfg, 4, 3);

        // identical initialization of the shared branch
        for ((na, a), (nb, b)) in baseline
            .named_params()
            .iter()
            .zip(multi.named_params().iter().filter(|(n, _)| n.starts_with("image.")))
        {
            assert_eq!(na, nb);
            assert_eq!(a.to_vec(), b.to_vec(), "init differs at {na}");
        }

        let mut eps_a = EpsStreams::for_seed(seed);
        let mut eps_b = EpsStreams::for_seed(seed);
        let la = baseline.training_loss(&batch, &mut eps_a).unwrap();
        let lb = multi.training_loss(&batch, &mut eps_b).unwrap();
        la.total.backward().unwrap();
        lb.total.backward().unwrap();

        for ((name, a), (_, b)) in baseline
            .named_params()
            .iter()
            .zip(multi.named_params().iter().filter(|(n, _)| n.starts_with("image.")))
        {
            let ga = a.grad().unwrap();
            let gb = b.grad().unwrap();
            assert_eq!(ga, gb, "{variant}: gradient differs at {name}");
        }
    }

    #[test]
    fn variant_a_with_zero_lambda_z_matches_baseline_gradients() {
        let cfg = ModelConfig { lambda_z: 0.0, ..tiny_config(Variant::A) };
        assert_image_branch_matches_baseline(Variant::A, cfg);
    }

    #[test]
    fn variant_b_with_zero_lambda_key_matches_baseline_gradients() {
        let cfg = ModelConfig { lambda_key: 0.0, ..tiny_config(Variant::B) };
        assert_image_branch_matches_baseline(Variant::B, cfg);
    }

    #[test]
    fn full_losses_pass_gradient_check_at_f64() {
        // 2-sample 16x16 batch through every variant's complete loss. The
        // step is kept at 1e-5: a wider interval can straddle a leaky-ReLU
        // kink and smear the central difference.
        for variant in [Variant::Baseline, Variant::A, Variant::B] {
            let config = tiny_config(variant);
            let model = MultiViewModel::<f64>::new(&config, 7).unwrap();
            let batch = tiny_batch::<f64>(&config, 5, 2);
            let params = model.params();
            let err = crate::tensor::grad_check(
                |_| {
                    let mut eps = EpsStreams::for_seed(40);
                    Ok(model.training_loss(&batch, &mut eps)?.total)
                },
                &params,
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-4, "{variant}: grad_check error {err}");
        }
    }

    #[test]
    fn retarget_same_identity_is_reconstruction_bitwise() {
        let config = tiny_config(Variant::Baseline);
        let model = MultiViewModel::<f32>::new(&config, 9).unwrap();
        let batch = tiny_batch::<f32>(&config, 6, 2);
        let r1 = retarget(&model, &batch.images, 1, 1).unwrap();
        let r2 = reconstruct(&model, &batch.images, 1).unwrap();
        let a = r1.to_vec();
        let b = r2.to_vec();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn interpolation_endpoints_match_retargets_bitwise() {
        let config = tiny_config(Variant::Baseline);
        let model = MultiViewModel::<f32>::new(&config, 9).unwrap();
        let b1 = tiny_batch::<f32>(&config, 6, 1);
        let b2 = tiny_batch::<f32>(&config, 8, 1);
        let at0 = interpolate(&model, &b1.images, &b2.images, 0.0, 2).unwrap();
        let at1 = interpolate(&model, &b1.images, &b2.images, 1.0, 2).unwrap();
        let r1 = retarget(&model, &b1.images, 0, 2).unwrap();
        let r2 = retarget(&model, &b2.images, 0, 2).unwrap();
        assert!(at0.to_vec().iter().zip(r1.to_vec()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(at1.to_vec().iter().zip(r2.to_vec()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(matches!(
            interpolate(&model, &b1.images, &b2.images, 1.5, 0),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn soft_labels_sum_to_one() {
        let mut rng = SeedRng::new(3);
        let classifier = IdentityClassifier::<f32>::new(16, 3, &mut rng).unwrap();
        let config = tiny_config(Variant::Baseline);
        let batch = tiny_batch::<f32>(&config, 2, 5);
        let soft = regress_new_identity(&classifier, &batch.images).unwrap();
        assert_eq!(soft.len(), 3);
        assert!((soft.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        let empty = Tensor::<f32>::zeros(&[0, 1, 16, 16]);
        assert!(matches!(
            regress_new_identity(&classifier, &empty),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn checkpointable_param_names_are_unique() {
        let config = tiny_config(Variant::A);
        let model = MultiViewModel::<f32>::new(&config, 1).unwrap();
        let names: Vec<String> = model.named_params().into_iter().map(|(n, _)| n).collect();
        let mut dedup = names.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), names.len());
    }
}
