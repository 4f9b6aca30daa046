//! The quantitative evaluation suite: AE error, identity classification
//! error, cross-identity correspondence L2, latent probes, and embedding
//! export.
//!
//! The correspondence metric is the one that measures semantics directly:
//! the dataset carries a 16-point semantic grid rendered for every
//! identity, so for each ordered identity pair the retargeted grid image
//! can be compared against the exact ground-truth render of the target
//! identity performing the same semantics.

mod classifier;
mod pca;
mod probes;

pub use classifier::{load_classifier, save_classifier, train_identity_classifier, TrainedClassifier};
pub use pca::{pca_fit, pca_project, pca_reconstruct, Pca};
pub use probes::{latent_probes, probe_features, ProbeData};

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::models::{retarget, ImageCvae, ModelConfig, MultiViewModel, Variant};
use crate::rng::SeedRng;
use crate::tensor::{no_grad, Element, Tensor};
use crate::train::{train, TrainConfig};

/// All metrics for one evaluated model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Mean L1 reconstruction of translated images through the target
    /// identity's own VAE.
    pub ae_error: f64,
    /// Mean cross-entropy of the identity classifier on translated images
    /// against their target identity.
    pub classification_error: f64,
    /// Mean squared pixel error between retargeted grid images and the
    /// target identity's ground-truth renders.
    pub correspondence_l2: f64,
    /// Held-out accuracy of a linear softmax probe latent -> identity.
    pub id_probe_accuracy: f64,
    /// Held-out R^2 of a linear probe latent -> semantic factors.
    pub semantic_probe_r2: f64,
    pub per_identity: Vec<PerIdentityMetrics>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerIdentityMetrics {
    pub identity: usize,
    /// AE error of translations targeting this identity.
    pub ae_error: f64,
    /// Correspondence L2 of translations targeting this identity.
    pub correspondence_l2: f64,
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub seed: u64,
    /// Epochs for each per-identity VAE.
    pub per_id_vae_epochs: usize,
    /// Epochs for the identity classifier.
    pub classifier_epochs: usize,
    /// Full-batch Adam steps for each linear probe.
    pub probe_steps: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { seed: 1013, per_id_vae_epochs: 10, classifier_epochs: 4, probe_steps: 400 }
    }
}

/// One retargeted grid image plus where it came from.
pub struct Translation<E: Element> {
    pub image: Tensor<E>,
    pub source_id: usize,
    pub target_id: usize,
    pub grid_point: usize,
}

/// Retarget every correspondence-grid image of every identity to every
/// other identity. The shared input for all three image metrics.
pub fn build_translation_set<E: Element>(
    model: &MultiViewModel<E>,
    dataset: &Dataset,
) -> Result<Vec<Translation<E>>> {
    let n = dataset.num_identities();
    let g = dataset.manifest.grid_per_id;
    let mut out = Vec::with_capacity(n * (n - 1) * g);
    for source in 0..n {
        let indices: Vec<usize> = (0..g).map(|gi| dataset.grid_index(source, gi)).collect();
        let batch = dataset.batch::<E>(&indices)?;
        for target in 0..n {
            if target == source {
                continue;
            }
            let translated = retarget(model, &batch.images, source, target)?;
            // split the batch back into single images
            let pixels = dataset.image_size() * dataset.image_size();
            let data = translated.data();
            for gi in 0..g {
                let img = data[gi * pixels..(gi + 1) * pixels].to_vec();
                out.push(Translation {
                    image: Tensor::from_vec(img, &[1, 1, dataset.image_size(), dataset.image_size()])?,
                    source_id: source,
                    target_id: target,
                    grid_point: gi,
                });
            }
        }
    }
    Ok(out)
}

/// Train one unconditional VAE per identity on that identity's training
/// images (same trunk as the image CVAE, no conditioning).
pub fn train_per_identity_vaes<E: Element>(
    dataset: &Dataset,
    model_config: &ModelConfig,
    cfg: &EvalConfig,
) -> Result<Vec<ImageCvae<E>>> {
    let mut vaes = Vec::with_capacity(dataset.num_identities());
    for id in 0..dataset.num_identities() {
        let mut rng = SeedRng::stream(cfg.seed ^ (id as u64) << 8, crate::rng::streams::IMAGE_INIT);
        let vae = ImageCvae::<E>::new_unconditional(model_config, &mut rng);
        let params: Vec<Tensor<E>> = vae.named_params("vae").into_iter().map(|(_, t)| t).collect();
        let mut opt = crate::nn::Adam::new(crate::nn::AdamHyper::default(), &params);
        let mut shuffle = SeedRng::stream(cfg.seed ^ (id as u64) << 8, crate::rng::streams::SHUFFLE);
        let mut eps = SeedRng::stream(cfg.seed ^ (id as u64) << 8, crate::rng::streams::IMAGE_EPS);
        let own = dataset.train_indices_of(id);
        for _ in 0..cfg.per_id_vae_epochs {
            let order = shuffle.shuffled_indices(own.len());
            for chunk in order.chunks(32) {
                let idxs: Vec<usize> = chunk.iter().map(|&i| own[i]).collect();
                let batch = dataset.batch::<E>(&idxs)?;
                let (mu, logvar) = vae.encode(&batch.images)?;
                let z = crate::nn::reparameterize(&mu, &logvar, &mut eps)?;
                let recon = vae.decode_code(&z)?;
                let l1 = crate::nn::l1_loss(&recon, &batch.images)?;
                let kl = crate::nn::kl_standard_normal(&mu, &logvar)?;
                let total = l1.add(&kl.scale(E::of_f64(model_config.lambda_kl)))?;
                total.backward()?;
                opt.step(&params)?;
                crate::nn::zero_grads(&params);
            }
        }
        vaes.push(vae);
    }
    Ok(vaes)
}

/// Mean L1 reconstruction of each translated image through the VAE of its
/// target identity. Lower means the translations sit closer to the target
/// identity's image manifold.
pub fn ae_error<E: Element>(
    translations: &[Translation<E>],
    per_id_vaes: &[ImageCvae<E>],
) -> Result<(f64, Vec<f64>)> {
    if translations.is_empty() {
        return Err(Error::contract("ae_error: empty translation set"));
    }
    let n = per_id_vaes.len();
    let mut sum = vec![0.0f64; n];
    let mut count = vec![0usize; n];
    for t in translations {
        let vae = per_id_vaes
            .get(t.target_id)
            .ok_or_else(|| Error::contract(format!("no per-identity VAE for id {}", t.target_id)))?;
        let err = no_grad(|| vae.reconstruction_l1(&t.image))?;
        sum[t.target_id] += err;
        count[t.target_id] += 1;
    }
    let per_id: Vec<f64> = sum
        .iter()
        .zip(&count)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    let total: f64 = sum.iter().sum::<f64>() / count.iter().sum::<usize>() as f64;
    Ok((total, per_id))
}

/// Mean cross-entropy of the classifier on translated images against their
/// target identity. Refuses to run under a classifier that cannot even
/// recognize ground-truth images (< 95%): the metric would be meaningless.
pub fn classification_error<E: Element>(
    translations: &[Translation<E>],
    classifier: &TrainedClassifier<E>,
) -> Result<f64> {
    if classifier.gt_accuracy < 0.95 {
        return Err(Error::contract(format!(
            "classifier ground-truth accuracy {:.3} below 0.95; refusing to evaluate",
            classifier.gt_accuracy
        )));
    }
    if translations.is_empty() {
        return Err(Error::contract("classification_error: empty translation set"));
    }
    let mut sum = 0.0;
    for t in translations {
        let probs = classifier.net.predict_probs(&t.image)?;
        let p = probs[0][t.target_id].max(1e-12);
        sum += -p.ln();
    }
    Ok(sum / translations.len() as f64)
}

/// Mean squared pixel error between each retargeted grid image and the
/// ground-truth render of the target identity at the same grid point.
pub fn correspondence_l2_error<E: Element>(
    model: &MultiViewModel<E>,
    dataset: &Dataset,
) -> Result<(f64, Vec<f64>)> {
    let translations = build_translation_set(model, dataset)?;
    correspondence_l2_of(&translations, dataset)
}

/// Same metric over an existing translation set.
pub fn correspondence_l2_of<E: Element>(
    translations: &[Translation<E>],
    dataset: &Dataset,
) -> Result<(f64, Vec<f64>)> {
    if translations.is_empty() {
        return Err(Error::contract("correspondence_l2: empty translation set"));
    }
    let n = dataset.num_identities();
    let mut sum = vec![0.0f64; n];
    let mut count = vec![0usize; n];
    for t in translations {
        let truth = dataset.image(dataset.grid_index(t.target_id, t.grid_point));
        let img = t.image.data();
        let mse: f64 = img
            .iter()
            .zip(truth)
            .map(|(a, b)| {
                let d = a.as_f64() - *b as f64;
                d * d
            })
            .sum::<f64>()
            / truth.len() as f64;
        sum[t.target_id] += mse;
        count[t.target_id] += 1;
    }
    let per_id: Vec<f64> = sum
        .iter()
        .zip(&count)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    let total = sum.iter().sum::<f64>() / count.iter().sum::<usize>() as f64;
    Ok((total, per_id))
}

/// Posterior means of every training record, as plain row-major features.
pub fn encode_all<E: Element>(
    model: &MultiViewModel<E>,
    dataset: &Dataset,
) -> Result<(Vec<f64>, usize)> {
    let latent = model.image.latent_dim();
    let mut z = Vec::with_capacity(dataset.num_train() * latent);
    for chunk in (0..dataset.num_train()).collect::<Vec<_>>().chunks(64) {
        let batch = dataset.batch::<E>(chunk)?;
        let (mu, _) = no_grad(|| model.image.encode(&batch.images))?;
        z.extend(mu.data().iter().map(|v| v.as_f64()));
    }
    Ok((z, latent))
}

/// Run the full metric suite against one trained model.
pub fn evaluate<E: Element>(
    model: &MultiViewModel<E>,
    dataset: &Dataset,
    cfg: &EvalConfig,
) -> Result<MetricsReport> {
    crate::configure_threads_from_env();
    if model.config.image_size != dataset.image_size()
        || model.config.num_identities != dataset.num_identities()
    {
        return Err(Error::contract(
            "checkpoint geometry does not match the dataset under evaluation",
        ));
    }
    let translations = build_translation_set(model, dataset)?;
    let classifier = train_identity_classifier::<E>(dataset, cfg)?;
    let vaes = train_per_identity_vaes::<E>(dataset, &model.config, cfg)?;
    let (ae, ae_per_id) = ae_error(&translations, &vaes)?;
    let ce = classification_error(&translations, &classifier)?;
    let (l2, l2_per_id) = correspondence_l2_of(&translations, dataset)?;
    let (id_acc, sem_r2) = latent_probes(model, dataset, cfg)?;
    let per_identity = (0..dataset.num_identities())
        .map(|id| PerIdentityMetrics {
            identity: id,
            ae_error: ae_per_id[id],
            correspondence_l2: l2_per_id[id],
        })
        .collect();
    Ok(MetricsReport {
        ae_error: ae,
        classification_error: ce,
        correspondence_l2: l2,
        id_probe_accuracy: id_acc,
        semantic_probe_r2: sem_r2,
        per_identity,
    })
}

/// Mean L2 distance between the image and keypoint posterior means over the
/// training set; the quantity the latent-consistency penalty drives down.
pub fn mean_latent_gap<E: Element>(model: &MultiViewModel<E>, dataset: &Dataset) -> Result<f64> {
    let keypoint = model
        .keypoint
        .as_ref()
        .ok_or_else(|| Error::contract("latent gap needs a keypoint branch (variant A)"))?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for chunk in (0..dataset.num_train()).collect::<Vec<_>>().chunks(64) {
        let batch = dataset.batch::<E>(chunk)?;
        let (mu_x, _) = no_grad(|| model.image.encode(&batch.images))?;
        let (mu_k, _) = no_grad(|| keypoint.encode(&batch.keypoints))?;
        let a = mu_x.data();
        let b = mu_k.data();
        let latent = model.image.latent_dim();
        for row in 0..chunk.len() {
            let mut d2 = 0.0;
            for j in 0..latent {
                let d = a[row * latent + j].as_f64() - b[row * latent + j].as_f64();
                d2 += d * d;
            }
            sum += d2.sqrt();
            count += 1;
        }
    }
    Ok(sum / count as f64)
}

/// Write `embeddings.csv` (sample, identity, semantics, latent) and
/// `pca.csv` (2-D projection) under `out_dir`.
pub fn export_embeddings<E: Element>(
    model: &MultiViewModel<E>,
    dataset: &Dataset,
    out_dir: &Path,
) -> Result<Pca> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let (z, latent) = encode_all(model, dataset)?;
    let rows = dataset.num_train();

    let ep = out_dir.join("embeddings.csv");
    let mut w = std::io::BufWriter::new(fs::File::create(&ep).map_err(|e| Error::io(&ep, e))?);
    let sem_dim = dataset.manifest.semantics_dim;
    let mut header = String::from("sample_id,identity");
    for j in 0..sem_dim {
        header.push_str(&format!(",s{j}"));
    }
    for j in 0..latent {
        header.push_str(&format!(",z{j}"));
    }
    writeln!(w, "{header}").map_err(|e| Error::io(&ep, e))?;
    for i in 0..rows {
        let mut line = format!("{},{}", i, dataset.label(i));
        for s in dataset.semantic(i) {
            line.push_str(&format!(",{s}"));
        }
        for j in 0..latent {
            line.push_str(&format!(",{}", z[i * latent + j]));
        }
        writeln!(w, "{line}").map_err(|e| Error::io(&ep, e))?;
    }
    w.flush().map_err(|e| Error::io(&ep, e))?;

    let pca = pca_fit(&z, rows, latent, 2);
    let pp = out_dir.join("pca.csv");
    let mut w = std::io::BufWriter::new(fs::File::create(&pp).map_err(|e| Error::io(&pp, e))?);
    writeln!(w, "sample_id,identity,pc1,pc2").map_err(|e| Error::io(&pp, e))?;
    for i in 0..rows {
        let coords = pca_project(&pca, &z[i * latent..(i + 1) * latent]);
        writeln!(w, "{},{},{},{}", i, dataset.label(i), coords[0], coords[1])
            .map_err(|e| Error::io(&pp, e))?;
    }
    w.flush().map_err(|e| Error::io(&pp, e))?;
    Ok(pca)
}

/// Serialize a metrics report as JSON.
pub fn write_report(report: &MetricsReport, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

/// Train a model of each variant with one call; convenience for pipelines
/// that compare variants side by side.
pub fn train_variant<E: Element>(
    dataset: &Dataset,
    variant: Variant,
    epochs: usize,
    seed: u64,
    lambda_overrides: Option<(f64, f64, f64)>,
) -> Result<crate::train::TrainResult<E>> {
    let mut cfg = TrainConfig::for_variant(variant);
    cfg.epochs = epochs;
    cfg.seed = seed;
    cfg.model.num_identities = dataset.num_identities();
    cfg.model.image_size = dataset.image_size();
    cfg.model.keypoint_dim = dataset.keypoint_dim();
    if let Some((kl, z, key)) = lambda_overrides {
        cfg.model.lambda_kl = kl;
        cfg.model.lambda_z = z;
        cfg.model.lambda_key = key;
    }
    train(&cfg, dataset, None)
}
