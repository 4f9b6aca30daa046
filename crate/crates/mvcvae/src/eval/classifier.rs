//! Training, saving, and loading the identity classifier used by the
//! classification-error metric and the new-identity regression.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::models::IdentityClassifier;
use crate::nn::{cross_entropy_loss, zero_grads, Adam, AdamHyper};
use crate::rng::{streams, SeedRng};
use crate::tensor::{io as tensor_io, no_grad, Dtype, Element};

use super::EvalConfig;

pub struct TrainedClassifier<E: Element> {
    pub net: IdentityClassifier<E>,
    /// Accuracy on the ground-truth training images it was fit to.
    pub gt_accuracy: f64,
}

/// Fit the small conv classifier to the dataset's ground-truth images.
/// The synthetic identities are cleanly separable; a few epochs reach
/// the >= 99% the classification metric expects.
pub fn train_identity_classifier<E: Element>(
    dataset: &Dataset,
    cfg: &EvalConfig,
) -> Result<TrainedClassifier<E>> {
    let mut rng = SeedRng::stream(cfg.seed, streams::PROBE_INIT);
    let net = IdentityClassifier::<E>::new(dataset.image_size(), dataset.num_identities(), &mut rng)?;
    let params = net.params();
    let mut opt = Adam::new(AdamHyper::default(), &params);
    let mut shuffle = SeedRng::stream(cfg.seed, streams::SHUFFLE);
    for _ in 0..cfg.classifier_epochs {
        let order = shuffle.shuffled_indices(dataset.num_train());
        for chunk in order.chunks(32) {
            let batch = dataset.batch::<E>(chunk)?;
            let logits = net.forward(&batch.images)?;
            let loss = cross_entropy_loss(&logits, &batch.labels)?;
            loss.backward()?;
            opt.step(&params)?;
            zero_grads(&params);
        }
    }
    let gt_accuracy = classifier_accuracy(&net, dataset)?;
    Ok(TrainedClassifier { net, gt_accuracy })
}

/// Fraction of ground-truth training images assigned their own label.
pub fn classifier_accuracy<E: Element>(net: &IdentityClassifier<E>, dataset: &Dataset) -> Result<f64> {
    let mut hits = 0usize;
    let total = dataset.num_train();
    for chunk in (0..total).collect::<Vec<_>>().chunks(64) {
        let batch = dataset.batch::<E>(chunk)?;
        let logits = no_grad(|| net.forward(&batch.images))?;
        let n = dataset.num_identities();
        let data = logits.data();
        for (row, &label) in batch.labels.iter().enumerate() {
            let r = &data[row * n..(row + 1) * n];
            let argmax = r
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            if argmax == label {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / total as f64)
}

#[derive(Serialize, Deserialize)]
struct ClassifierManifest {
    image_size: usize,
    num_classes: usize,
    gt_accuracy: f64,
    dtype: Dtype,
    tensors: Vec<tensor_io::TensorMeta>,
}

const MANIFEST: &str = "classifier.json";

pub fn save_classifier<E: Element>(c: &TrainedClassifier<E>, dir: &Path) -> Result<()> {
    let tdir = dir.join("tensors");
    fs::create_dir_all(&tdir).map_err(|e| Error::io(&tdir, e))?;
    let mut metas = Vec::new();
    for (name, t) in c.net.named_params("classifier") {
        tensor_io::write_tensor(&tdir, &name, t.shape(), &t.data())?;
        metas.push(tensor_io::TensorMeta { name, shape: t.shape().to_vec(), dtype: E::DTYPE });
    }
    let manifest = ClassifierManifest {
        image_size: c.net.image_size(),
        num_classes: c.net.num_classes(),
        gt_accuracy: c.gt_accuracy,
        dtype: E::DTYPE,
        tensors: metas,
    };
    let mp = dir.join(MANIFEST);
    fs::write(&mp, serde_json::to_string_pretty(&manifest).expect("serializes"))
        .map_err(|e| Error::io(&mp, e))
}

pub fn load_classifier<E: Element>(dir: &Path) -> Result<TrainedClassifier<E>> {
    let mp = dir.join(MANIFEST);
    let json = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
    let manifest: ClassifierManifest = serde_json::from_str(&json)
        .map_err(|e| Error::corrupt(format!("classifier manifest: {e}")))?;
    if manifest.dtype != E::DTYPE {
        return Err(Error::contract(format!(
            "classifier stores {} parameters, {} requested",
            manifest.dtype.as_str(),
            E::DTYPE.as_str()
        )));
    }
    let mut rng = SeedRng::new(0);
    let net = IdentityClassifier::<E>::new(manifest.image_size, manifest.num_classes, &mut rng)?;
    let tdir = dir.join("tensors");
    for (name, t) in net.named_params("classifier") {
        let (meta, data) = tensor_io::read_tensor::<E>(&tdir, &name)?;
        if meta.shape != t.shape() {
            return Err(Error::contract(format!(
                "classifier tensor {name} has shape {:?}, expected {:?}",
                meta.shape,
                t.shape()
            )));
        }
        t.set_data(data)?;
    }
    Ok(TrainedClassifier { net, gt_accuracy: manifest.gt_accuracy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{generate_dataset, GenConfig};

    #[test]
    fn classifier_reaches_high_accuracy_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        generate_dataset(
            &GenConfig { num_identities: 3, samples_per_id: 30, image_size: 16, seed: 9 },
            dir.path(),
        )
        .unwrap();
        let ds = Dataset::load(dir.path()).unwrap();
        let cfg = EvalConfig { classifier_epochs: 6, ..Default::default() };
        let trained = train_identity_classifier::<f32>(&ds, &cfg).unwrap();
        assert!(trained.gt_accuracy >= 0.95, "accuracy {}", trained.gt_accuracy);

        let cdir = dir.path().join("clf");
        save_classifier(&trained, &cdir).unwrap();
        let loaded = load_classifier::<f32>(&cdir).unwrap();
        assert_eq!(loaded.gt_accuracy, trained.gt_accuracy);
        let batch = ds.batch::<f32>(&[0, 31, 61]).unwrap();
        let a = trained.net.predict_probs(&batch.images).unwrap();
        let b = loaded.net.predict_probs(&batch.images).unwrap();
        assert_eq!(a, b);
    }
}
