//! The `mvcvae` command-line pipeline: dataset generation, training,
//! evaluation, retargeting, interpolation, embedding export, and
//! new-identity regression.
//!
//! Every command writes a `run_manifest.json` beside its outputs recording
//! the effective configuration, seeds, paths, wall clock, and git describe
//! string. Outputs are byte-reproducible given identical flags, except for
//! that manifest (it carries the wall clock). Failures print one
//! machine-parsable line to stderr and exit with a per-class code: 2 usage,
//! 3 I/O, 4 contract violation, 5 corrupt data, 6 non-finite loss.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::eval::{self, EvalConfig};
use crate::models::{interpolate, regress_new_identity, retarget, Variant};
use crate::pgm;
use crate::synthgen::{generate_dataset, GenConfig};
use crate::tensor::Tensor;
use crate::train::{load_checkpoint, train, TrainConfig};

#[derive(Parser)]
#[command(name = "mvcvae", version, about = "Multi-view conditional VAE toolkit")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic multi-identity dataset.
    GenData {
        #[arg(long)]
        ids: usize,
        #[arg(long)]
        samples: usize,
        #[arg(long, default_value_t = 32)]
        size: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model variant on a generated dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// baseline | a | b (overrides the config file)
        #[arg(long)]
        variant: Option<String>,
        /// JSON file mirroring the TrainConfig schema
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the full metrics report for a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 1013)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-render an image under another identity.
    Retarget {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input_image: PathBuf,
        #[arg(long)]
        source_id: usize,
        #[arg(long)]
        target_id: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Interpolate between two images in latent space; writes a strip.
    Interpolate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 5)]
        steps: usize,
        #[arg(long)]
        render_id: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export latent embeddings and their 2-D PCA projection as CSV.
    Embed {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Express an unseen person as a soft combination of known identities.
    RegressId {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        classifier: PathBuf,
        #[arg(long)]
        images_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub wall_clock_secs: f64,
    pub git_describe: String,
}

pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".to_string())
}

struct ManifestSink {
    command: String,
    config: serde_json::Value,
    seeds: Vec<u64>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    started: Instant,
}

impl ManifestSink {
    fn new(command: &str) -> Self {
        ManifestSink {
            command: command.to_string(),
            config: serde_json::Value::Null,
            seeds: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    fn config<T: Serialize>(&mut self, cfg: &T) {
        self.config = serde_json::to_value(cfg).unwrap_or(serde_json::Value::Null);
    }

    fn seed(&mut self, s: u64) {
        self.seeds.push(s);
    }

    fn input(&mut self, p: &Path) {
        self.inputs.push(p.display().to_string());
    }

    fn output(&mut self, p: &Path) {
        self.outputs.push(p.display().to_string());
    }

    /// Write beside the outputs: into `target` when it is a directory,
    /// as a `<target>.run_manifest.json` sibling otherwise.
    fn write(self, target: &Path) -> Result<()> {
        let manifest = RunManifest {
            command: self.command,
            config: self.config,
            seeds: self.seeds,
            inputs: self.inputs,
            outputs: self.outputs,
            wall_clock_secs: self.started.elapsed().as_secs_f64(),
            git_describe: git_describe(),
        };
        let path = if target.is_dir() {
            target.join(RUN_MANIFEST_FILE)
        } else {
            let mut name = target.file_name().unwrap_or_default().to_os_string();
            name.push(".run_manifest.json");
            target.with_file_name(name)
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }
}

/// Parse arguments from the process environment and run; returns the exit
/// code. Argument errors exit with code 2 via clap.
pub fn run() -> i32 {
    let cli = Cli::parse();
    crate::configure_threads_from_env();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            let class = match &e {
                Error::Io { .. } => "io",
                Error::Contract(_) => "contract",
                Error::Corrupt(_) => "corrupt",
                Error::NonFinite { .. } => "non-finite",
            };
            eprintln!("error: {class}: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::GenData { ids, samples, size, seed, out } => cmd_gen_data(ids, samples, size, seed, &out),
        Command::Train { data, variant, config, epochs, batch_size, lr, seed, out } => {
            cmd_train(&data, variant, config, epochs, batch_size, lr, seed, &out)
        }
        Command::Eval { checkpoint, data, seed, out } => cmd_eval(&checkpoint, &data, seed, &out),
        Command::Retarget { checkpoint, input_image, source_id, target_id, out } => {
            cmd_retarget(&checkpoint, &input_image, source_id, target_id, &out)
        }
        Command::Interpolate { checkpoint, a, b, steps, render_id, out } => {
            cmd_interpolate(&checkpoint, &a, &b, steps, render_id, &out)
        }
        Command::Embed { checkpoint, data, out } => cmd_embed(&checkpoint, &data, &out),
        Command::RegressId { checkpoint, classifier, images_dir, out } => {
            cmd_regress_id(&checkpoint, &classifier, &images_dir, &out)
        }
    }
}

fn cmd_gen_data(ids: usize, samples: usize, size: usize, seed: u64, out: &Path) -> Result<()> {
    let mut sink = ManifestSink::new("gen-data");
    let cfg = GenConfig { num_identities: ids, samples_per_id: samples, image_size: size, seed };
    sink.config(&cfg);
    sink.seed(seed);
    generate_dataset(&cfg, out)?;
    sink.output(out);
    sink.write(out)
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    data: &Path,
    variant: Option<String>,
    config_file: Option<PathBuf>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    lr: Option<f64>,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let mut sink = ManifestSink::new("train");
    sink.input(data);
    let dataset = Dataset::load(data)?;

    let mut cfg = match &config_file {
        Some(p) => {
            sink.input(p);
            let json = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str::<TrainConfig>(&json)
                .map_err(|e| Error::corrupt(format!("train config {}: {e}", p.display())))?
        }
        None => {
            let mut c = TrainConfig::default();
            c.model.image_size = dataset.image_size();
            c.model.keypoint_dim = dataset.keypoint_dim();
            c.model.num_identities = dataset.num_identities();
            c
        }
    };
    // explicit flags override the file
    if let Some(v) = variant {
        let v: Variant = v.parse()?;
        cfg.variant = v;
        cfg.model.variant = v;
    }
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    if let Some(b) = batch_size {
        cfg.batch_size = b;
    }
    if let Some(l) = lr {
        cfg.lr = l;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    sink.config(&cfg);
    sink.seed(cfg.seed);

    train::<f32>(&cfg, &dataset, Some(out))?;
    sink.output(&out.join("final"));
    sink.output(&out.join("loss.csv"));
    sink.write(out)
}

fn cmd_eval(checkpoint: &Path, data: &Path, seed: u64, out: &Path) -> Result<()> {
    let mut sink = ManifestSink::new("eval");
    sink.input(checkpoint);
    sink.input(data);
    sink.seed(seed);
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let dataset = Dataset::load(data)?;
    let (model, _manifest) = load_checkpoint::<f32>(checkpoint)?;
    let cfg = EvalConfig { seed, ..Default::default() };
    sink.config(&model.config);

    let report = eval::evaluate(&model, &dataset, &cfg)?;
    let rp = out.join("metrics.json");
    eval::write_report(&report, &rp)?;
    sink.output(&rp);

    // the classifier used by the metric doubles as the regress-id input
    let classifier = eval::train_identity_classifier::<f32>(&dataset, &cfg)?;
    let cp = out.join("classifier");
    eval::save_classifier(&classifier, &cp)?;
    sink.output(&cp);
    sink.write(out)
}

fn load_image_as_tensor(path: &Path, expect_size: usize) -> Result<Tensor<f32>> {
    let (w, h, pixels) = pgm::read_pgm(path)?;
    if w != expect_size || h != expect_size {
        return Err(Error::contract(format!(
            "{}: image is {w}x{h}, checkpoint expects {expect_size}x{expect_size}",
            path.display()
        )));
    }
    Tensor::from_vec(pixels, &[1, 1, h, w])
}

fn cmd_retarget(checkpoint: &Path, input: &Path, source_id: usize, target_id: usize, out: &Path) -> Result<()> {
    let mut sink = ManifestSink::new("retarget");
    sink.input(checkpoint);
    sink.input(input);
    let (model, _) = load_checkpoint::<f32>(checkpoint)?;
    sink.config(&model.config);
    let x = load_image_as_tensor(input, model.config.image_size)?;
    let y = retarget(&model, &x, source_id, target_id)?;
    let size = model.config.image_size;
    pgm::write_pgm(out, size, size, &y.data())?;
    sink.output(out);
    sink.write(out)
}

fn cmd_interpolate(checkpoint: &Path, a: &Path, b: &Path, steps: usize, render_id: usize, out: &Path) -> Result<()> {
    let mut sink = ManifestSink::new("interpolate");
    sink.input(checkpoint);
    sink.input(a);
    sink.input(b);
    if steps < 2 {
        return Err(Error::contract("interpolate needs --steps >= 2"));
    }
    let (model, _) = load_checkpoint::<f32>(checkpoint)?;
    sink.config(&model.config);
    let size = model.config.image_size;
    let xa = load_image_as_tensor(a, size)?;
    let xb = load_image_as_tensor(b, size)?;

    // horizontal strip of the interpolation path
    let mut strip = vec![0.0f32; size * size * steps];
    for s in 0..steps {
        let t = s as f64 / (steps - 1) as f64;
        let img = interpolate(&model, &xa, &xb, t, render_id)?;
        let data = img.data();
        for row in 0..size {
            let dst = row * size * steps + s * size;
            strip[dst..dst + size].copy_from_slice(&data[row * size..(row + 1) * size]);
        }
    }
    pgm::write_pgm(out, size * steps, size, &strip)?;
    sink.output(out);
    sink.write(out)
}

fn cmd_embed(checkpoint: &Path, data: &Path, out: &Path) -> Result<()> {
    let mut sink = ManifestSink::new("embed");
    sink.input(checkpoint);
    sink.input(data);
    let dataset = Dataset::load(data)?;
    let (model, _) = load_checkpoint::<f32>(checkpoint)?;
    sink.config(&model.config);
    eval::export_embeddings(&model, &dataset, out)?;
    sink.output(&out.join("embeddings.csv"));
    sink.output(&out.join("pca.csv"));
    sink.write(out)
}

fn cmd_regress_id(checkpoint: &Path, classifier: &Path, images_dir: &Path, out: &Path) -> Result<()> {
    let mut sink = ManifestSink::new("regress-id");
    sink.input(checkpoint);
    sink.input(classifier);
    sink.input(images_dir);
    let (model, _) = load_checkpoint::<f32>(checkpoint)?;
    sink.config(&model.config);
    let clf = eval::load_classifier::<f32>(classifier)?;

    let mut paths: Vec<PathBuf> = fs::read_dir(images_dir)
        .map_err(|e| Error::io(images_dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().map(|x| x == "pgm").unwrap_or(false))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::contract(format!(
            "{}: no .pgm images found",
            images_dir.display()
        )));
    }
    let size = model.config.image_size;
    let mut pixels = Vec::with_capacity(paths.len() * size * size);
    for p in &paths {
        let img = load_image_as_tensor(p, size)?;
        pixels.extend_from_slice(&img.data());
    }
    let batch = Tensor::from_vec(pixels, &[paths.len(), 1, size, size])?;
    let soft = regress_new_identity(&clf.net, &batch)?;
    let argmax = soft
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0);

    #[derive(Serialize)]
    struct SoftLabel {
        soft_label: Vec<f64>,
        argmax: usize,
        images: usize,
    }
    let json = serde_json::to_string_pretty(&SoftLabel { soft_label: soft, argmax, images: paths.len() })
        .expect("serializes");
    fs::write(out, json).map_err(|e| Error::io(out, e))?;
    sink.output(out);
    sink.write(out)
}
