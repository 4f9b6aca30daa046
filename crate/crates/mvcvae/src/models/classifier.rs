//! Small convolutional identity classifier: three stride-2 stages and a
//! linear head. Used by the classification-error metric and by the
//! new-identity regression.

use crate::error::{Error, Result};
use crate::nn::{Conv2d, Linear};
use crate::rng::SeedRng;
use crate::tensor::{no_grad, Element, Tensor};

const STAGE_CHANNELS: [usize; 3] = [16, 32, 64];

pub struct IdentityClassifier<E: Element> {
    image_size: usize,
    num_classes: usize,
    convs: Vec<Conv2d<E>>,
    head: Linear<E>,
}

impl<E: Element> IdentityClassifier<E> {
    pub fn new(image_size: usize, num_classes: usize, rng: &mut SeedRng) -> Result<Self> {
        if image_size >> STAGE_CHANNELS.len() == 0 {
            return Err(Error::contract(format!(
                "classifier needs image_size >= {}, got {image_size}",
                1 << STAGE_CHANNELS.len()
            )));
        }
        let mut convs = Vec::new();
        let mut in_ch = 1;
        for &out_ch in &STAGE_CHANNELS {
            convs.push(Conv2d::new(in_ch, out_ch, 4, 2, 1, rng));
            in_ch = out_ch;
        }
        let spatial = image_size >> STAGE_CHANNELS.len();
        let head = Linear::new(in_ch * spatial * spatial, num_classes, rng);
        Ok(IdentityClassifier { image_size, num_classes, convs, head })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn image_size(&self) -> usize {
        self.image_size
    }

    pub fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        let shape = x.shape();
        if shape.len() != 4 || shape[1] != 1 || shape[2] != self.image_size {
            return Err(Error::contract(format!(
                "classifier expects [B,1,{0},{0}], got {1:?}",
                self.image_size, shape
            )));
        }
        let mut h = x.clone();
        for conv in &self.convs {
            h = conv.forward(&h)?.leaky_relu(E::of_f64(0.2));
        }
        let b = shape[0];
        let flat = h.numel() / b;
        self.head.forward(&h.reshape(&[b, flat])?)
    }

    /// Softmax probabilities per row, computed off-graph.
    pub fn predict_probs(&self, x: &Tensor<E>) -> Result<Vec<Vec<f64>>> {
        let logits = no_grad(|| self.forward(x))?;
        let n = self.num_classes;
        let data = logits.data();
        let mut out = Vec::with_capacity(x.shape()[0]);
        for row in data.chunks(n) {
            let max = row.iter().copied().fold(row[0], E::max).as_f64();
            let exps: Vec<f64> = row.iter().map(|v| (v.as_f64() - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            out.push(exps.iter().map(|e| e / sum).collect());
        }
        Ok(out)
    }

    pub fn params(&self) -> Vec<Tensor<E>> {
        self.named_params("classifier").into_iter().map(|(_, t)| t).collect()
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, Tensor<E>)> {
        let mut out = Vec::new();
        for (i, c) in self.convs.iter().enumerate() {
            out.push((format!("{prefix}.conv{i}.weight"), c.weight.clone()));
            out.push((format!("{prefix}.conv{i}.bias"), c.bias.clone()));
        }
        out.push((format!("{prefix}.head.weight"), self.head.weight.clone()));
        out.push((format!("{prefix}.head.bias"), self.head.bias.clone()));
        out
    }
}
