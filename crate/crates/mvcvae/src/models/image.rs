//! The convolutional image CVAE.
//!
//! Encoder: `conv_stages` stride-2 convolutions (k=4, pad=1) with
//! leaky-ReLU, flattened into mean and log-variance heads. Decoder: the
//! identity code is concatenated with the latent, projected and reshaped
//! to the bottleneck feature map, then mirrored transposed convolutions
//! with ReLU and a final sigmoid map back to `[0,1]` images.
//!
//! The encoder never sees the identity; the label conditions the decoder
//! only, so identity is privileged information of the training phase.

use crate::error::{Error, Result};
use crate::nn::{
    l1_loss, reparameterize, Activation, Conv2d, ConvTranspose2d, LayerSpec, Linear, LOGVAR_CLAMP,
};
use crate::rng::SeedRng;
use crate::tensor::{Element, Tensor};

use super::{IdentityEmbedding, LatentCode, Mode, ModelConfig, ID_EMBED_DIM};

pub struct ImageCvae<E: Element> {
    image_size: usize,
    latent_dim: usize,
    top_channels: usize,
    bottleneck: usize,
    enc: Vec<Conv2d<E>>,
    fc_mu: Linear<E>,
    fc_logvar: Linear<E>,
    embed: Option<IdentityEmbedding<E>>,
    fc_dec: Linear<E>,
    dec: Vec<ConvTranspose2d<E>>,
}

impl<E: Element> ImageCvae<E> {
    /// Identity-conditioned CVAE (the usual case).
    pub fn new_conditional(config: &ModelConfig, rng: &mut SeedRng) -> Self {
        Self::build(config, true, rng)
    }

    /// Plain VAE with the same trunk and no conditioning; used for the
    /// per-identity autoencoders of the AE-error metric.
    pub fn new_unconditional(config: &ModelConfig, rng: &mut SeedRng) -> Self {
        Self::build(config, false, rng)
    }

    fn build(config: &ModelConfig, conditioned: bool, rng: &mut SeedRng) -> Self {
        let stages = config.conv_stages;
        let mut enc = Vec::with_capacity(stages);
        for i in 0..stages {
            enc.push(Conv2d::new(
                config.stage_in_channels(i),
                config.stage_out_channels(i),
                4,
                2,
                1,
                rng,
            ));
        }
        let flat = config.flat_dim();
        let fc_mu = Linear::new(flat, config.latent_dim, rng);
        let fc_logvar = Linear::new(flat, config.latent_dim, rng);
        fc_logvar
            .bias
            .update_data(|b| b.fill(E::of_f64(crate::nn::LOGVAR_BIAS_INIT)));
        let embed = conditioned.then(|| IdentityEmbedding::new(config.num_identities, rng));
        let dec_in = config.latent_dim + if conditioned { ID_EMBED_DIM } else { 0 };
        let fc_dec = Linear::new(dec_in, flat, rng);
        let mut dec = Vec::with_capacity(stages);
        for i in (0..stages).rev() {
            dec.push(ConvTranspose2d::new(
                config.stage_out_channels(i),
                config.stage_in_channels(i),
                4,
                2,
                1,
                rng,
            ));
        }
        ImageCvae {
            image_size: config.image_size,

            latent_dim: config.latent_dim,
            top_channels: config.top_channels(),
            bottleneck: config.bottleneck_extent(),
            enc,
            fc_mu,
            fc_logvar,
            embed,
            fc_dec,
            dec,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn image_size(&self) -> usize {
        self.image_size
    }

    pub fn is_conditioned(&self) -> bool {
        self.embed.is_some()
    }

    pub fn embedding(&self) -> Option<&IdentityEmbedding<E>> {
        self.embed.as_ref()
    }

    /// Declarative encoder geometry, for shape-contract checks.
    pub fn encoder_specs(&self) -> Vec<LayerSpec> {
        self.enc
            .iter()
            .map(|c| {
                LayerSpec::conv(
                    c.weight.shape()[1],
                    c.weight.shape()[0],
                    c.weight.shape()[2],
                    c.stride,
                    c.pad,
                    Activation::LeakyRelu(0.2),
                )
            })
            .collect()
    }

    pub fn decoder_specs(&self) -> Vec<LayerSpec> {
        self.dec
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let act = if i + 1 == self.dec.len() { Activation::Sigmoid } else { Activation::Relu };
                LayerSpec::conv_transpose(
                    c.weight.shape()[0],
                    c.weight.shape()[1],
                    c.weight.shape()[2],
                    c.stride,
                    c.pad,
                    act,
                )
            })
            .collect()
    }

    /// Posterior parameters for a batch of images. The log-variance head is
    /// clamped before anything exponentiates it.
    pub fn encode(&self, x: &Tensor<E>) -> Result<(Tensor<E>, Tensor<E>)> {
        let shape = x.shape();
        if shape.len() != 4 || shape[1] != 1 || shape[2] != self.image_size || shape[3] != self.image_size
        {
            return Err(Error::contract(format!(
                "image encoder expects [B,1,{0},{0}], got {1:?}",
                self.image_size, shape
            )));
        }
        let mut h = x.clone();
        for conv in &self.enc {
            h = conv.forward(&h)?.leaky_relu(E::of_f64(0.2));
        }
        let flat = self.top_channels * self.bottleneck * self.bottleneck;
        let h = h.reshape(&[shape[0], flat])?;
        let mu = self.fc_mu.forward(&h)?;
        let logvar = self
            .fc_logvar
            .forward(&h)?
            .clamp(E::of_f64(LOGVAR_CLAMP.0), E::of_f64(LOGVAR_CLAMP.1));
        Ok((mu, logvar))
    }

    /// Identity codes for hard labels; errors on unconditional models.
    pub fn embed_labels(&self, labels: &[usize]) -> Result<Tensor<E>> {
        self.embed
            .as_ref()
            .ok_or_else(|| Error::contract("model has no identity conditioning"))?
            .forward(labels)
    }

    /// Decode an already-assembled `[B, latent(+embed)]` code.
    pub fn decode_code(&self, code: &Tensor<E>) -> Result<Tensor<E>> {
        let expect = self.latent_dim + if self.embed.is_some() { ID_EMBED_DIM } else { 0 };
        if code.shape().len() != 2 || code.shape()[1] != expect {
            return Err(Error::contract(format!(
                "decoder expects [B,{expect}], got {:?}",
                code.shape()
            )));
        }
        let b = code.shape()[0];
        let mut h = self.fc_dec.forward(code)?.relu();
        h = h.reshape(&[b, self.top_channels, self.bottleneck, self.bottleneck])?;
        let last = self.dec.len() - 1;
        for (i, deconv) in self.dec.iter().enumerate() {
            h = deconv.forward(&h)?;
            h = if i == last { h.sigmoid() } else { h.relu() };
        }
        Ok(h)
    }

    /// Decode a latent under hard identity labels.
    pub fn decode(&self, z: &Tensor<E>, labels: &[usize]) -> Result<Tensor<E>> {
        match &self.embed {
            Some(embed) => {
                if z.shape()[0] != labels.len() {
                    return Err(Error::contract(format!(
                        "decode: {} latents but {} labels",
                        z.shape()[0],
                        labels.len()
                    )));
                }
                let z_c = embed.forward(labels)?;
                self.decode_code(&z.concat(&z_c, 1)?)
            }
            None => self.decode_code(z),
        }
    }

    /// Decode a latent under a soft identity distribution `[B, N]`.
    pub fn decode_soft(&self, z: &Tensor<E>, soft: &Tensor<E>) -> Result<Tensor<E>> {
        let embed = self
            .embed
            .as_ref()
            .ok_or_else(|| Error::contract("model has no identity conditioning"))?;
        let z_c = embed.forward_soft(soft)?;
        self.decode_code(&z.concat(&z_c, 1)?)
    }

    /// Full pass: encode, sample (or take the mean in `Infer`), decode.
    pub fn forward(
        &self,
        x: &Tensor<E>,
        labels: &[usize],
        mode: Mode,
        rng: &mut SeedRng,
    ) -> Result<(Tensor<E>, LatentCode<E>)> {
        let (mu, logvar) = self.encode(x)?;
        let z = match mode {
            Mode::Train => reparameterize(&mu, &logvar, rng)?,
            Mode::Infer => mu.clone(),
        };
        let recon = self.decode(&z, labels)?;
        Ok((recon, LatentCode { mu, logvar, z }))
    }

    /// Plain reconstruction likelihood of a batch through this (typically
    /// unconditional) VAE at the posterior mean.
    pub fn reconstruction_l1(&self, x: &Tensor<E>) -> Result<f64> {
        let (mu, _) = self.encode(x)?;
        let recon = self.decode_code(&mu)?;
        Ok(l1_loss(&recon, x)?.item().as_f64())
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, Tensor<E>)> {
        let mut out = Vec::new();
        for (i, c) in self.enc.iter().enumerate() {
            out.push((format!("{prefix}.enc{i}.weight"), c.weight.clone()));
            out.push((format!("{prefix}.enc{i}.bias"), c.bias.clone()));
        }
        out.push((format!("{prefix}.fc_mu.weight"), self.fc_mu.weight.clone()));
        out.push((format!("{prefix}.fc_mu.bias"), self.fc_mu.bias.clone()));
        out.push((format!("{prefix}.fc_logvar.weight"), self.fc_logvar.weight.clone()));
        out.push((format!("{prefix}.fc_logvar.bias"), self.fc_logvar.bias.clone()));
        if let Some(e) = &self.embed {
            out.push((format!("{prefix}.embed.weight"), e.weight.clone()));
        }
        out.push((format!("{prefix}.fc_dec.weight"), self.fc_dec.weight.clone()));
        out.push((format!("{prefix}.fc_dec.bias"), self.fc_dec.bias.clone()));
        for (i, c) in self.dec.iter().enumerate() {
            out.push((format!("{prefix}.dec{i}.weight"), c.weight.clone()));
            out.push((format!("{prefix}.dec{i}.bias"), c.bias.clone()));
        }
        out
    }
}
