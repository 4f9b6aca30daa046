//! Mini-batch training loop with seeding, loss logging, and checkpoints.
//!
//! Everything stochastic is keyed off `TrainConfig::seed`: parameter
//! initialization, the per-epoch shuffles, and the reparameterization
//! noise of each branch. Two runs with the same (config, dataset, seed)
//! produce bitwise-identical checkpoints.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::models::{EpsStreams, ModelConfig, MultiViewModel, Variant};
use crate::nn::{zero_grads, Adam, AdamHyper};
use crate::rng::{streams, SeedRng};
use crate::tensor::{io as tensor_io, Dtype, Element};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub variant: Variant,
    pub model: ModelConfig,
    /// Write an intermediate checkpoint every this many steps (0 = off).
    pub checkpoint_every: usize,
    /// Print a progress line every this many steps (0 = off).
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            epochs: 20,
            lr: 1e-3,
            seed: 7,
            variant: Variant::Baseline,
            model: ModelConfig::default(),
            checkpoint_every: 0,
            log_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn for_variant(variant: Variant) -> Self {
        let mut cfg = TrainConfig::default();
        cfg.variant = variant;
        cfg.model.variant = variant;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::contract("batch_size must be >= 1"));
        }
        if self.epochs == 0 {
            return Err(Error::contract("epochs must be >= 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::contract(format!("lr {} must be positive", self.lr)));
        }
        if self.variant != self.model.variant {
            return Err(Error::contract(format!(
                "train variant {} disagrees with model variant {}",
                self.variant, self.model.variant
            )));
        }
        self.model.validate()
    }

    /// The model geometry must match what the dataset actually contains.
    pub fn validate_against(&self, dataset: &Dataset) -> Result<()> {
        self.validate()?;
        let m = &self.model;
        if m.image_size != dataset.image_size() {
            return Err(Error::contract(format!(
                "model image_size {} vs dataset {}",
                m.image_size,
                dataset.image_size()
            )));
        }
        if m.keypoint_dim != dataset.keypoint_dim() {
            return Err(Error::contract(format!(
                "model keypoint_dim {} vs dataset {}",
                m.keypoint_dim,
                dataset.keypoint_dim()
            )));
        }
        if m.num_identities != dataset.num_identities() {
            return Err(Error::contract(format!(
                "model num_identities {} vs dataset {}",
                m.num_identities,
                dataset.num_identities()
            )));
        }
        Ok(())
    }
}

/// One row of the loss history CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct LossRow {
    pub step: u64,
    pub epoch: usize,
    pub total: f64,
    pub image_recon: f64,
    pub keypoint_recon: f64,
    pub kl_image: f64,
    pub kl_keypoint: f64,
    pub latent_consistency: f64,
}

pub const LOSS_CSV_HEADER: &str =
    "step,epoch,total,image_recon,keypoint_recon,kl_image,kl_keypoint,latent_consistency";

impl LossRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.step,
            self.epoch,
            self.total,
            self.image_recon,
            self.keypoint_recon,
            self.kl_image,
            self.kl_keypoint,
            self.latent_consistency
        )
    }
}

pub struct TrainResult<E: Element> {
    pub model: MultiViewModel<E>,
    pub history: Vec<LossRow>,
    pub steps: u64,
}

/// Train a fresh model of the configured variant on the dataset's training
/// block. When `out_dir` is given, writes `loss.csv` plus the final (and
/// any periodic) checkpoints beneath it.
pub fn train<E: Element>(
    config: &TrainConfig,
    dataset: &Dataset,
    out_dir: Option<&Path>,
) -> Result<TrainResult<E>> {
    crate::configure_threads_from_env();
    config.validate_against(dataset)?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let model = MultiViewModel::<E>::new(&config.model, config.seed)?;
    let params = model.params();
    let mut opt = Adam::new(AdamHyper::with_lr(config.lr), &params);
    let mut shuffle_rng = SeedRng::stream(config.seed, streams::SHUFFLE);
    let mut eps = EpsStreams::for_seed(config.seed);

    let mut history = Vec::new();
    let mut csv: Option<std::io::BufWriter<fs::File>> = match out_dir {
        Some(dir) => {
            let p = dir.join("loss.csv");
            let mut w = std::io::BufWriter::new(fs::File::create(&p).map_err(|e| Error::io(&p, e))?);
            writeln!(w, "{LOSS_CSV_HEADER}").map_err(|e| Error::io(&p, e))?;
            Some(w)
        }
        None => None,
    };

    let mut step: u64 = 0;
    for epoch in 0..config.epochs {
        let order = shuffle_rng.shuffled_indices(dataset.num_train());
        for chunk in order.chunks(config.batch_size) {
            let batch = dataset.batch::<E>(chunk)?;
            let lb = model.training_loss(&batch, &mut eps)?;
            step += 1;

            let row = LossRow {
                step,
                epoch,
                total: lb.total_value(),
                image_recon: lb.image_recon,
                keypoint_recon: lb.keypoint_recon,
                kl_image: lb.kl_image,
                kl_keypoint: lb.kl_keypoint,
                latent_consistency: lb.latent_consistency,
            };
            if !row.total.is_finite() {
                let component = lb
                    .components()
                    .iter()
                    .find(|(_, v)| !v.is_finite())
                    .map(|(n, _)| n.to_string())
                    .unwrap_or_else(|| "total".to_string());
                return Err(Error::NonFinite { component, step });
            }

            lb.total.backward()?;
            opt.step(&params)?;
            zero_grads(&params);

            if let Some(w) = csv.as_mut() {
                writeln!(w, "{}", row.to_csv())
                    .map_err(|e| Error::io(out_dir.unwrap().join("loss.csv"), e))?;
            }
            if config.log_every > 0 && step % config.log_every as u64 == 0 {
                eprintln!(
                    "epoch {epoch} step {step} total {:.5} recon {:.5} kl {:.3}",
                    row.total, row.image_recon, row.kl_image
                );
            }
            history.push(row);

            if config.checkpoint_every > 0 && step % config.checkpoint_every as u64 == 0 {
                if let Some(dir) = out_dir {
                    save_checkpoint(&model, config.seed, step, &dir.join(format!("step_{step}")))?;
                }
            }
        }
    }

    if let Some(w) = csv.as_mut() {
        w.flush().map_err(|e| Error::io(out_dir.unwrap().join("loss.csv"), e))?;
    }
    if let Some(dir) = out_dir {
        save_checkpoint(&model, config.seed, step, &dir.join("final"))?;
    }
    Ok(TrainResult { model, history, steps: step })
}

// ---------------------------------------------------------------------------
// Checkpoints

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub config: ModelConfig,
    pub seed: u64,
    pub step: u64,
    pub dtype: Dtype,
    pub tensors: Vec<tensor_io::TensorMeta>,
}

pub const CHECKPOINT_MANIFEST: &str = "manifest.json";
pub const TENSOR_SUBDIR: &str = "tensors";

/// Write every named parameter of the model plus a manifest tying them to
/// the config that created them.
pub fn save_checkpoint<E: Element>(
    model: &MultiViewModel<E>,
    seed: u64,
    step: u64,
    dir: &Path,
) -> Result<()> {
    let tdir = dir.join(TENSOR_SUBDIR);
    fs::create_dir_all(&tdir).map_err(|e| Error::io(&tdir, e))?;
    let mut metas = Vec::new();
    for (name, t) in model.named_params() {
        tensor_io::write_tensor(&tdir, &name, t.shape(), &t.data())?;
        metas.push(tensor_io::TensorMeta {
            name,
            shape: t.shape().to_vec(),
            dtype: E::DTYPE,
        });
    }
    let manifest = CheckpointManifest {
        config: model.config.clone(),
        seed,
        step,
        dtype: E::DTYPE,
        tensors: metas,
    };
    let mp = dir.join(CHECKPOINT_MANIFEST);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&mp, json).map_err(|e| Error::io(&mp, e))?;
    Ok(())
}

/// Rebuild a model from a checkpoint directory. Round-trips losslessly:
/// every parameter is restored bit for bit.
pub fn load_checkpoint<E: Element>(dir: &Path) -> Result<(MultiViewModel<E>, CheckpointManifest)> {
    let mp = dir.join(CHECKPOINT_MANIFEST);
    let json = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&json)
        .map_err(|e| Error::corrupt(format!("checkpoint manifest: {e}")))?;
    if manifest.dtype != E::DTYPE {
        return Err(Error::contract(format!(
            "checkpoint stores {} parameters, {} requested",
            manifest.dtype.as_str(),
            E::DTYPE.as_str()
        )));
    }
    let model = MultiViewModel::<E>::new(&manifest.config, manifest.seed)?;
    let tdir = dir.join(TENSOR_SUBDIR);
    for (name, t) in model.named_params() {
        let (meta, data) = tensor_io::read_tensor::<E>(&tdir, &name)?;
        if meta.shape != t.shape() {
            return Err(Error::contract(format!(
                "checkpoint tensor {name} has shape {:?}, model expects {:?}",
                meta.shape,
                t.shape()
            )));
        }
        t.set_data(data)?;
    }
    Ok((model, manifest))
}

/// Bit-equality of two models' parameters, for determinism checks.
pub fn models_identical<E: Element>(a: &MultiViewModel<E>, b: &MultiViewModel<E>) -> bool {
    let pa = a.named_params();
    let pb = b.named_params();
    if pa.len() != pb.len() {
        return false;
    }
    pa.iter().zip(pb.iter()).all(|((na, ta), (nb, tb))| {
        na == nb
            && ta.shape() == tb.shape()
            && ta
                .data()
                .iter()
                .zip(tb.data().iter())
                .all(|(x, y)| x.as_f64().to_bits() == y.as_f64().to_bits())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{generate_dataset, GenConfig};

    fn tiny_dataset(dir: &Path) -> Dataset {
        let cfg = GenConfig { num_identities: 2, samples_per_id: 8, image_size: 16, seed: 3 };
        generate_dataset(&cfg, dir).unwrap();
        Dataset::load(dir).unwrap()
    }

    fn tiny_train_config(variant: Variant) -> TrainConfig {
        TrainConfig {
            batch_size: 4,
            epochs: 1,
            seed: 5,
            variant,
            model: ModelConfig {
                image_size: 16,
                conv_stages: 2,
                base_channels: 4,
                latent_dim: 8,
                num_identities: 2,
                keypoint_dim: 20,
                keypoint_hidden: 16,
                keypoint_layers: 2,
                variant,
                ..Default::default()
            },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_rejected() {
        let mut cfg = tiny_train_config(Variant::Baseline);
        cfg.epochs = 0;
        assert!(matches!(cfg.validate(), Err(Error::Contract(_))));
    }

    #[test]
    fn config_dataset_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny_dataset(dir.path());
        let mut cfg = tiny_train_config(Variant::Baseline);
        cfg.model.num_identities = 5;
        assert!(matches!(
            train::<f32>(&cfg, &ds, None),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn identical_runs_produce_bitwise_identical_models() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny_dataset(dir.path());
        for variant in [Variant::Baseline, Variant::A, Variant::B] {
            let cfg = tiny_train_config(variant);
            let r1 = train::<f32>(&cfg, &ds, None).unwrap();
            let r2 = train::<f32>(&cfg, &ds, None).unwrap();
            assert!(models_identical(&r1.model, &r2.model), "{variant} differs");
            assert_eq!(r1.history, r2.history, "{variant} history differs");
        }
    }

    #[test]
    fn checkpoint_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny_dataset(dir.path());
        let cfg = tiny_train_config(Variant::A);
        let r = train::<f32>(&cfg, &ds, None).unwrap();
        let ckpt = dir.path().join("ckpt");
        save_checkpoint(&r.model, cfg.seed, r.steps, &ckpt).unwrap();
        let (loaded, manifest) = load_checkpoint::<f32>(&ckpt).unwrap();
        assert_eq!(manifest.step, r.steps);
        assert_eq!(manifest.config, cfg.model);
        assert!(models_identical(&r.model, &loaded));

        // forward pass of the loaded model matches the original
        let batch = ds.batch::<f32>(&[0, 3]).unwrap();
        let a = crate::models::reconstruct(&r.model, &batch.images, 0).unwrap();
        let b = crate::models::reconstruct(&loaded, &batch.images, 0).unwrap();
        assert_eq!(a.to_vec(), b.to_vec());
    }

    #[test]
    fn tampered_checkpoint_shape_is_contract_violation() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny_dataset(dir.path());
        let cfg = tiny_train_config(Variant::Baseline);
        let r = train::<f32>(&cfg, &ds, None).unwrap();
        let ckpt = dir.path().join("ckpt");
        save_checkpoint(&r.model, cfg.seed, r.steps, &ckpt).unwrap();

        // rewrite the manifest with a different latent_dim; stored tensor
        // shapes no longer match the model the config implies
        let mp = ckpt.join(CHECKPOINT_MANIFEST);
        let mut manifest: CheckpointManifest =
            serde_json::from_str(&fs::read_to_string(&mp).unwrap()).unwrap();
        manifest.config.latent_dim = 16;
        fs::write(&mp, serde_json::to_string(&manifest).unwrap()).unwrap();
        assert!(matches!(
            load_checkpoint::<f32>(&ckpt),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn missing_tensor_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny_dataset(dir.path());
        let cfg = tiny_train_config(Variant::Baseline);
        let r = train::<f32>(&cfg, &ds, None).unwrap();
        let ckpt = dir.path().join("ckpt");
        save_checkpoint(&r.model, cfg.seed, r.steps, &ckpt).unwrap();
        fs::remove_file(ckpt.join(TENSOR_SUBDIR).join("image.fc_mu.weight.bin")).unwrap();
        match load_checkpoint::<f32>(&ckpt) {
            Err(Error::Io { path, .. }) => {
                assert!(path.to_string_lossy().contains("image.fc_mu.weight"));
            }
            other => panic!("expected io error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn loss_csv_written_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny_dataset(dir.path());
        let cfg = tiny_train_config(Variant::A);
        let out = dir.path().join("run");
        let r = train::<f32>(&cfg, &ds, Some(&out)).unwrap();
        let csv = fs::read_to_string(out.join("loss.csv")).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), LOSS_CSV_HEADER);
        assert_eq!(lines.count() as u64, r.steps);
        assert!(out.join("final").join(CHECKPOINT_MANIFEST).exists());
    }

    #[test]
    fn gradient_reaches_keypoint_encoder_through_consistency() {
        // with lambda_z > 0 the keypoint-encoder weights get nonzero
        // gradients even when the keypoint reconstruction is detached
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny_dataset(dir.path());
        let cfg = tiny_train_config(Variant::A);
        let model = MultiViewModel::<f64>::new(&cfg.model, 3).unwrap();
        let batch = ds.batch::<f64>(&[0, 1, 2]).unwrap();
        let mut eps = EpsStreams::for_seed(3);
        let lb = crate::models::loss_variant_a(&model, &batch, &mut eps).unwrap();
        lb.total.backward().unwrap();
        let enc_w = model
            .named_params()
            .into_iter()
            .find(|(n, _)| n == "keypoint.enc0.weight")
            .unwrap()
            .1;
        let g = enc_w.grad().unwrap();
        assert!(g.iter().any(|v| *v != 0.0));
    }
}
