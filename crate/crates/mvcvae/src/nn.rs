//! Neural layers, initializers, the Adam optimizer, and the VAE loss
//! primitives (reconstruction, KL, reparameterization).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedRng;
use crate::tensor::{conv2d_output_extent, conv_transpose2d_output_extent, Element, Tensor};

/// Log-variance is clamped into this interval before exponentiation to keep
/// `exp` finite early in training.
pub const LOGVAR_CLAMP: (f64, f64) = (-10.0, 10.0);

/// Initial bias of log-variance heads. Starting the posterior narrow
/// (sigma ~ 0.14) lets the decoder read the latent from the first step;
/// a unit-variance start buries it in noise and the posterior collapses
/// before the encoder becomes useful.
pub const LOGVAR_BIAS_INIT: f64 = -4.0;

// ---------------------------------------------------------------------------
// Initializers

/// Xavier/Glorot uniform: entries in `[-a, a]` with `a = sqrt(6/(fan_in+fan_out))`.
pub fn xavier_init<E: Element>(
    fan_in: usize,
    fan_out: usize,
    shape: &[usize],
    rng: &mut SeedRng,
) -> Tensor<E> {
    assert!(fan_in > 0 && fan_out > 0, "fans must be positive");
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut data = vec![E::zero(); shape.iter().product()];
    rng.fill_uniform(&mut data, -a, a);
    Tensor::param(data, shape).expect("shape/product consistent by construction")
}

/// Standard-normal entries; used for the identity-embedding layer.
pub fn normal_init<E: Element>(shape: &[usize], rng: &mut SeedRng) -> Tensor<E> {
    let mut data = vec![E::zero(); shape.iter().product()];
    rng.fill_standard_normal(&mut data);
    Tensor::param(data, shape).expect("shape/product consistent by construction")
}

// ---------------------------------------------------------------------------
// Layers

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    LeakyRelu(f64),
    Relu,
    Sigmoid,
    None,
}

impl Activation {
    pub fn apply<E: Element>(&self, x: &Tensor<E>) -> Tensor<E> {
        match self {
            Activation::LeakyRelu(slope) => x.leaky_relu(E::of_f64(*slope)),
            Activation::Relu => x.relu(),
            Activation::Sigmoid => x.sigmoid(),
            Activation::None => x.clone(),
        }
    }
}

/// Declarative description of one layer; the geometry source of truth for
/// shape checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerKind {
    Conv { in_channels: usize, out_channels: usize, kernel: usize, stride: usize, pad: usize },
    ConvTranspose { in_channels: usize, out_channels: usize, kernel: usize, stride: usize, pad: usize },
    Linear { in_dim: usize, out_dim: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn conv(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, pad: usize, activation: Activation) -> Self {
        LayerSpec { kind: LayerKind::Conv { in_channels, out_channels, kernel, stride, pad }, activation }
    }

    pub fn conv_transpose(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, pad: usize, activation: Activation) -> Self {
        LayerSpec { kind: LayerKind::ConvTranspose { in_channels, out_channels, kernel, stride, pad }, activation }
    }

    pub fn linear(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        LayerSpec { kind: LayerKind::Linear { in_dim, out_dim }, activation }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: usize, what: &str| {
            if v == 0 {
                Err(Error::contract(format!("layer spec: {what} must be positive")))
            } else {
                Ok(())
            }
        };
        match &self.kind {
            LayerKind::Conv { in_channels, out_channels, kernel, stride, .. }
            | LayerKind::ConvTranspose { in_channels, out_channels, kernel, stride, .. } => {
                positive(*in_channels, "in_channels")?;
                positive(*out_channels, "out_channels")?;
                positive(*kernel, "kernel")?;
                positive(*stride, "stride")?;
            }
            LayerKind::Linear { in_dim, out_dim } => {
                positive(*in_dim, "in_dim")?;
                positive(*out_dim, "out_dim")?;
            }
        }
        if let Activation::LeakyRelu(slope) = self.activation {
            if !(slope > 0.0 && slope <= 1.0) {
                return Err(Error::contract(format!(
                    "leaky_relu slope {slope} outside (0, 1]"
                )));
            }
        }
        Ok(())
    }

    /// Output shape this layer produces for `input` (batch leading).
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match &self.kind {
            LayerKind::Conv { in_channels, out_channels, kernel, stride, pad } => {
                if input.len() != 4 || input[1] != *in_channels {
                    return Err(Error::contract(format!(
                        "conv layer expects [N,{in_channels},H,W], got {input:?}"
                    )));
                }
                let h = conv2d_output_extent(input[2], *kernel, *stride, *pad)?;
                let w = conv2d_output_extent(input[3], *kernel, *stride, *pad)?;
                Ok(vec![input[0], *out_channels, h, w])
            }
            LayerKind::ConvTranspose { in_channels, out_channels, kernel, stride, pad } => {
                if input.len() != 4 || input[1] != *in_channels {
                    return Err(Error::contract(format!(
                        "conv_transpose layer expects [N,{in_channels},H,W], got {input:?}"
                    )));
                }
                let h = conv_transpose2d_output_extent(input[2], *kernel, *stride, *pad)?;
                let w = conv_transpose2d_output_extent(input[3], *kernel, *stride, *pad)?;
                Ok(vec![input[0], *out_channels, h, w])
            }
            LayerKind::Linear { in_dim, out_dim } => {
                if input.len() != 2 || input[1] != *in_dim {
                    return Err(Error::contract(format!(
                        "linear layer expects [N,{in_dim}], got {input:?}"
                    )));
                }
                Ok(vec![input[0], *out_dim])
            }
        }
    }
}

/// Fully connected layer, `y = x @ W + b` with `W: [in, out]`.
pub struct Linear<E: Element> {
    pub weight: Tensor<E>,
    pub bias: Tensor<E>,
}

impl<E: Element> Linear<E> {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut SeedRng) -> Self {
        Linear {
            weight: xavier_init(in_dim, out_dim, &[in_dim, out_dim], rng),
            bias: Tensor::param(vec![E::zero(); out_dim], &[out_dim]).unwrap(),
        }
    }

    pub fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        x.matmul(&self.weight)?.add(&self.bias)
    }

    pub fn params(&self) -> Vec<Tensor<E>> {
        vec![self.weight.clone(), self.bias.clone()]
    }
}

/// Convolution layer with weight `[F, C, k, k]`.
pub struct Conv2d<E: Element> {
    pub weight: Tensor<E>,
    pub bias: Tensor<E>,
    pub stride: usize,
    pub pad: usize,
}

impl<E: Element> Conv2d<E> {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, pad: usize, rng: &mut SeedRng) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let fan_out = out_channels * kernel * kernel;
        Conv2d {
            weight: xavier_init(fan_in, fan_out, &[out_channels, in_channels, kernel, kernel], rng),
            bias: Tensor::param(vec![E::zero(); out_channels], &[out_channels]).unwrap(),
            stride,
            pad,
        }
    }

    pub fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        x.conv2d(&self.weight, &self.bias, self.stride, self.pad)
    }

    pub fn params(&self) -> Vec<Tensor<E>> {
        vec![self.weight.clone(), self.bias.clone()]
    }
}

/// Transposed convolution layer with weight `[C, F, k, k]`.
pub struct ConvTranspose2d<E: Element> {
    pub weight: Tensor<E>,
    pub bias: Tensor<E>,
    pub stride: usize,
    pub pad: usize,
}

impl<E: Element> ConvTranspose2d<E> {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, pad: usize, rng: &mut SeedRng) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let fan_out = out_channels * kernel * kernel;
        ConvTranspose2d {
            weight: xavier_init(fan_in, fan_out, &[in_channels, out_channels, kernel, kernel], rng),
            bias: Tensor::param(vec![E::zero(); out_channels], &[out_channels]).unwrap(),
            stride,
            pad,
        }
    }

    pub fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        x.conv_transpose2d(&self.weight, &self.bias, self.stride, self.pad)
    }

    pub fn params(&self) -> Vec<Tensor<E>> {
        vec![self.weight.clone(), self.bias.clone()]
    }
}

// ---------------------------------------------------------------------------
// VAE primitives

/// `z = mu + exp(0.5 * logvar) * eps`, `eps ~ N(0, I)`.
///
/// Gradient flows to `mu` and `logvar`; the noise is a constant. Callers
/// clamp `logvar` at the encoder head (see [`LOGVAR_CLAMP`]).
pub fn reparameterize<E: Element>(
    mu: &Tensor<E>,
    logvar: &Tensor<E>,
    rng: &mut SeedRng,
) -> Result<Tensor<E>> {
    if mu.shape() != logvar.shape() {
        return Err(Error::contract(format!(
            "reparameterize: mu {:?} vs logvar {:?}",
            mu.shape(),
            logvar.shape()
        )));
    }
    let mut eps = vec![E::zero(); mu.numel()];
    rng.fill_standard_normal(&mut eps);
    let eps = Tensor::from_vec(eps, mu.shape())?;
    let std = logvar.scale(E::of_f64(0.5)).exp();
    mu.add(&std.mul(&eps)?)
}

/// Closed-form KL divergence of a diagonal Gaussian from the standard
/// normal: `0.5 * sum_i (mu_i^2 + exp(logvar_i) - 1 - logvar_i)`, summed
/// over the latent dimension and averaged over any leading batch dimension.
pub fn kl_standard_normal<E: Element>(mu: &Tensor<E>, logvar: &Tensor<E>) -> Result<Tensor<E>> {
    if mu.shape() != logvar.shape() {
        return Err(Error::contract(format!(
            "kl_standard_normal: mu {:?} vs logvar {:?}",
            mu.shape(),
            logvar.shape()
        )));
    }
    let batch = if mu.shape().len() >= 2 { mu.shape()[0] } else { 1 };
    let ones = Tensor::full(mu.shape(), E::one());
    let term = mu.square()?.add(&logvar.exp())?.sub(&ones)?.sub(logvar)?;
    Ok(term.sum().scale(E::of_f64(0.5 / batch as f64)))
}

/// Mean absolute error over all elements.
pub fn l1_loss<E: Element>(pred: &Tensor<E>, target: &Tensor<E>) -> Result<Tensor<E>> {
    if pred.shape() != target.shape() {
        return Err(Error::contract(format!(
            "l1_loss: pred {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    Ok(pred.sub(target)?.abs().mean())
}

/// Mean squared error over all elements.
pub fn mse_loss<E: Element>(pred: &Tensor<E>, target: &Tensor<E>) -> Result<Tensor<E>> {
    if pred.shape() != target.shape() {
        return Err(Error::contract(format!(
            "mse_loss: pred {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    Ok(pred.sub(target)?.square()?.mean())
}

/// Mean softmax cross-entropy of `logits: [B, N]` against integer targets.
pub fn cross_entropy_loss<E: Element>(logits: &Tensor<E>, targets: &[usize]) -> Result<Tensor<E>> {
    let shape = logits.shape();
    if shape.len() != 2 || shape[0] != targets.len() {
        return Err(Error::contract(format!(
            "cross_entropy: logits {:?} vs {} targets",
            shape,
            targets.len()
        )));
    }
    let (b, n) = (shape[0], shape[1]);
    let mut mask = vec![E::zero(); b * n];
    let mut row_max = vec![E::zero(); b];
    {
        let data = logits.data();
        for (i, &t) in targets.iter().enumerate() {
            if t >= n {
                return Err(Error::contract(format!(
                    "cross_entropy: target {t} out of range for {n} classes"
                )));
            }
            mask[i * n + t] = E::one();
            let row = &data[i * n..(i + 1) * n];
            row_max[i] = row.iter().copied().fold(row[0], E::max);
        }
    }
    // stable log-sum-exp with a detached per-row max shift
    let shift = Tensor::from_vec(row_max, &[b, 1])?;
    let centered = logits.sub(&shift)?;
    let lse = centered.exp().sum_axis(1)?.log().add(&shift)?;
    let picked = logits.mul(&Tensor::from_vec(mask, &[b, n])?)?.sum_axis(1)?;
    Ok(lse.sub(&picked)?.mean())
}

// ---------------------------------------------------------------------------
// Adam

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper { lr: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamHyper {
    pub fn with_lr(lr: f64) -> Self {
        AdamHyper { lr, ..Default::default() }
    }
}

/// Adam state: first/second-moment buffers per parameter plus the step count.
pub struct Adam<E: Element> {
    pub hyper: AdamHyper,
    step_count: u64,
    m: Vec<Vec<E>>,
    v: Vec<Vec<E>>,
}

impl<E: Element> Adam<E> {
    pub fn new(hyper: AdamHyper, params: &[Tensor<E>]) -> Self {
        Adam {
            hyper,
            step_count: 0,
            m: params.iter().map(|p| vec![E::zero(); p.numel()]).collect(),
            v: params.iter().map(|p| vec![E::zero(); p.numel()]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One update with bias correction. Reads each parameter's populated
    /// gradient; zeroing afterwards is the caller's job.
    pub fn step(&mut self, params: &[Tensor<E>]) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::contract(format!(
                "adam: {} parameters but state tracks {}",
                params.len(),
                self.m.len()
            )));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let lr = E::of_f64(self.hyper.lr);
        let b1 = E::of_f64(self.hyper.beta1);
        let b2 = E::of_f64(self.hyper.beta2);
        let eps = E::of_f64(self.hyper.epsilon);
        let one = E::one();
        let c1 = one - b1.powi(t);
        let c2 = one - b2.powi(t);
        for (i, p) in params.iter().enumerate() {
            let grad = p.grad().ok_or_else(|| {
                Error::contract(format!("adam: parameter {i} has no gradient"))
            })?;
            if grad.len() != self.m[i].len() {
                return Err(Error::contract(format!(
                    "adam: gradient length {} does not match state {}",
                    grad.len(),
                    self.m[i].len()
                )));
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            p.update_data(|data| {
                for j in 0..data.len() {
                    let g = grad[j];
                    m[j] = b1 * m[j] + (one - b1) * g;
                    v[j] = b2 * v[j] + (one - b2) * g * g;
                    let m_hat = m[j] / c1;
                    let v_hat = v[j] / c2;
                    data[j] = data[j] - lr * m_hat / (v_hat.sqrt() + eps);
                }
            });
        }
        Ok(())
    }
}

pub fn zero_grads<E: Element>(params: &[Tensor<E>]) {
    for p in params {
        p.zero_grad();
    }
}
