//! The keypoint CVAE (variant A) and the weak keypoint decoder head
//! (variant B).

use crate::error::{Error, Result};
use crate::nn::{reparameterize, Linear, LOGVAR_CLAMP};
use crate::rng::SeedRng;
use crate::tensor::{Element, Tensor};

use super::{IdentityEmbedding, LatentCode, Mode, ModelConfig, ID_EMBED_DIM};

/// Fully connected CVAE over flattened keypoint vectors: four 500-wide
/// layers on each side by default, 128-dim latent, its own identity
/// embedding for the decoder.
pub struct KeypointCvae<E: Element> {
    keypoint_dim: usize,
    latent_dim: usize,
    enc: Vec<Linear<E>>,
    fc_mu: Linear<E>,
    fc_logvar: Linear<E>,
    embed: IdentityEmbedding<E>,
    dec: Vec<Linear<E>>,
    dec_out: Linear<E>,
}

impl<E: Element> KeypointCvae<E> {
    pub fn new(config: &ModelConfig, rng: &mut SeedRng) -> Self {
        let h = config.keypoint_hidden;
        let layers = config.keypoint_layers;
        let mut enc = Vec::with_capacity(layers);
        let mut d = config.keypoint_dim;
        for _ in 0..layers {
            enc.push(Linear::new(d, h, rng));
            d = h;
        }
        let fc_mu = Linear::new(h, config.latent_dim, rng);
        let fc_logvar = Linear::new(h, config.latent_dim, rng);
        fc_logvar
            .bias
            .update_data(|b| b.fill(E::of_f64(crate::nn::LOGVAR_BIAS_INIT)));
        let embed = IdentityEmbedding::new(config.num_identities, rng);
        let mut dec = Vec::with_capacity(layers);
        let mut d = config.latent_dim + ID_EMBED_DIM;
        for _ in 0..layers {
            dec.push(Linear::new(d, h, rng));
            d = h;
        }
        let dec_out = Linear::new(h, config.keypoint_dim, rng);
        KeypointCvae {
            keypoint_dim: config.keypoint_dim,
            latent_dim: config.latent_dim,
            enc,
            fc_mu,
            fc_logvar,
            embed,
            dec,
            dec_out,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn encode(&self, k: &Tensor<E>) -> Result<(Tensor<E>, Tensor<E>)> {
        let shape = k.shape();
        if shape.len() != 2 || shape[1] != self.keypoint_dim {
            return Err(Error::contract(format!(
                "keypoint encoder expects [B,{}], got {:?}",
                self.keypoint_dim, shape
            )));
        }
        let mut h = k.clone();
        for l in &self.enc {
            h = l.forward(&h)?.leaky_relu(E::of_f64(0.2));
        }
        let mu = self.fc_mu.forward(&h)?;
        let logvar = self
            .fc_logvar
            .forward(&h)?
            .clamp(E::of_f64(LOGVAR_CLAMP.0), E::of_f64(LOGVAR_CLAMP.1));
        Ok((mu, logvar))
    }

    /// Decode to a keypoint vector; linear output (keypoints live in
    /// `[-1, 1]`, no squashing).
    pub fn decode(&self, z: &Tensor<E>, labels: &[usize]) -> Result<Tensor<E>> {
        let z_c = self.embed.forward(labels)?;
        let mut h = z.concat(&z_c, 1)?;
        for l in &self.dec {
            h = l.forward(&h)?.relu();
        }
        self.dec_out.forward(&h)
    }

    pub fn forward(
        &self,
        k: &Tensor<E>,
        labels: &[usize],
        mode: Mode,
        rng: &mut SeedRng,
    ) -> Result<(Tensor<E>, LatentCode<E>)> {
        let (mu, logvar) = self.encode(k)?;
        let z = match mode {
            Mode::Train => reparameterize(&mu, &logvar, rng)?,
            Mode::Infer => mu.clone(),
        };
        let recon = self.decode(&z, labels)?;
        Ok((recon, LatentCode { mu, logvar, z }))
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, Tensor<E>)> {
        let mut out = Vec::new();
        for (i, l) in self.enc.iter().enumerate() {
            out.push((format!("{prefix}.enc{i}.weight"), l.weight.clone()));
            out.push((format!("{prefix}.enc{i}.bias"), l.bias.clone()));
        }
        out.push((format!("{prefix}.fc_mu.weight"), self.fc_mu.weight.clone()));
        out.push((format!("{prefix}.fc_mu.bias"), self.fc_mu.bias.clone()));
        out.push((format!("{prefix}.fc_logvar.weight"), self.fc_logvar.weight.clone()));
        out.push((format!("{prefix}.fc_logvar.bias"), self.fc_logvar.bias.clone()));
        out.push((format!("{prefix}.embed.weight"), self.embed.weight.clone()));
        for (i, l) in self.dec.iter().enumerate() {
            out.push((format!("{prefix}.dec{i}.weight"), l.weight.clone()));
            out.push((format!("{prefix}.dec{i}.bias"), l.bias.clone()));
        }
        out.push((format!("{prefix}.dec_out.weight"), self.dec_out.weight.clone()));
        out.push((format!("{prefix}.dec_out.bias"), self.dec_out.bias.clone()));
        out
    }
}

/// Variant B's keypoint decoder: two 128-wide layers, deliberately weaker
/// than the image decoder so the latent leans toward keypoint semantics.
pub struct KeypointHead<E: Element> {
    fc1: Linear<E>,
    fc2: Linear<E>,
}

pub const KEYPOINT_HEAD_WIDTH: usize = 128;

impl<E: Element> KeypointHead<E> {
    pub fn new(in_dim: usize, keypoint_dim: usize, rng: &mut SeedRng) -> Self {
        KeypointHead {
            fc1: Linear::new(in_dim, KEYPOINT_HEAD_WIDTH, rng),
            fc2: Linear::new(KEYPOINT_HEAD_WIDTH, keypoint_dim, rng),
        }
    }

    /// `code` is the decoder input `[B, latent + embed]`.
    pub fn forward(&self, code: &Tensor<E>) -> Result<Tensor<E>> {
        self.fc2.forward(&self.fc1.forward(code)?.relu())
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, Tensor<E>)> {
        vec![
            (format!("{prefix}.fc1.weight"), self.fc1.weight.clone()),
            (format!("{prefix}.fc1.bias"), self.fc1.bias.clone()),
            (format!("{prefix}.fc2.weight"), self.fc2.weight.clone()),
            (format!("{prefix}.fc2.bias"), self.fc2.bias.clone()),
        ]
    }
}
