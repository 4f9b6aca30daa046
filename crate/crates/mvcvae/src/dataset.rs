//! Loading the generated dataset directory into memory and cutting
//! mini-batches from it.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::synthgen::{
    DatasetManifest, IdentityStyle, IMAGES_FILE, KEYPOINTS_FILE, LABELS_FILE, MANIFEST_FILE,
    SEMANTICS_FILE,
};
use crate::tensor::{Element, Tensor};

/// A fully materialized dataset. Train records come first, then the
/// per-identity correspondence grid.
pub struct Dataset {
    pub manifest: DatasetManifest,
    dir: PathBuf,
    images: Vec<f32>,
    keypoints: Vec<f32>,
    labels: Vec<u32>,
    semantics: Vec<f32>,
}

/// One mini-batch as graph-ready tensors.
pub struct Batch<E: Element> {
    /// `[B, 1, H, W]`
    pub images: Tensor<E>,
    /// `[B, keypoint_dim]`
    pub keypoints: Tensor<E>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self> {
        let mp = dir.join(MANIFEST_FILE);
        let json = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&json)
            .map_err(|e| Error::corrupt(format!("dataset manifest: {e}")))?;

        let total = manifest.num_train + manifest.num_grid;
        let pixels = manifest.config.image_size * manifest.config.image_size;
        let images = read_f32(dir, IMAGES_FILE, total * pixels)?;
        let keypoints = read_f32(dir, KEYPOINTS_FILE, total * manifest.keypoint_dim)?;
        let labels = read_u32(dir, LABELS_FILE, total)?;
        let semantics = read_f32(dir, SEMANTICS_FILE, total * manifest.semantics_dim)?;
        if labels
            .iter()
            .any(|&l| l as usize >= manifest.config.num_identities)
        {
            return Err(Error::corrupt("dataset label out of identity range"));
        }
        Ok(Dataset {
            manifest,
            dir: dir.to_path_buf(),
            images,
            keypoints,
            labels,
            semantics,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn num_train(&self) -> usize {
        self.manifest.num_train
    }

    pub fn num_total(&self) -> usize {
        self.manifest.num_train + self.manifest.num_grid
    }

    pub fn image_size(&self) -> usize {
        self.manifest.config.image_size
    }

    pub fn keypoint_dim(&self) -> usize {
        self.manifest.keypoint_dim
    }

    pub fn num_identities(&self) -> usize {
        self.manifest.config.num_identities
    }

    pub fn style(&self, id: usize) -> &IdentityStyle {
        &self.manifest.styles[id]
    }

    pub fn label(&self, index: usize) -> usize {
        self.labels[index] as usize
    }

    pub fn image(&self, index: usize) -> &[f32] {
        let p = self.image_size() * self.image_size();
        &self.images[index * p..(index + 1) * p]
    }

    pub fn keypoint(&self, index: usize) -> &[f32] {
        let k = self.keypoint_dim();
        &self.keypoints[index * k..(index + 1) * k]
    }

    pub fn semantic(&self, index: usize) -> &[f32] {
        let s = self.manifest.semantics_dim;
        &self.semantics[index * s..(index + 1) * s]
    }

    /// Flat index of correspondence-grid record `g` of identity `id`.
    pub fn grid_index(&self, id: usize, g: usize) -> usize {
        self.manifest.num_train + id * self.manifest.grid_per_id + g
    }

    /// Train-set indices belonging to one identity.
    pub fn train_indices_of(&self, id: usize) -> Vec<usize> {
        (0..self.num_train()).filter(|&i| self.label(i) == id).collect()
    }

    /// Gather `indices` into tensors.
    pub fn batch<E: Element>(&self, indices: &[usize]) -> Result<Batch<E>> {
        let b = indices.len();
        if b == 0 {
            return Err(Error::contract("batch: empty index list"));
        }
        let size = self.image_size();
        let pixels = size * size;
        let kdim = self.keypoint_dim();
        let mut images = Vec::with_capacity(b * pixels);
        let mut keypoints = Vec::with_capacity(b * kdim);
        let mut labels = Vec::with_capacity(b);
        for &i in indices {
            if i >= self.num_total() {
                return Err(Error::contract(format!(
                    "batch: record {i} out of range ({} records)",
                    self.num_total()
                )));
            }
            images.extend(self.image(i).iter().map(|&v| E::of_f64(v as f64)));
            keypoints.extend(self.keypoint(i).iter().map(|&v| E::of_f64(v as f64)));
            labels.push(self.label(i));
        }
        Ok(Batch {
            images: Tensor::from_vec(images, &[b, 1, size, size])?,
            keypoints: Tensor::from_vec(keypoints, &[b, kdim])?,
            labels,
        })
    }

    /// One image as a `[1, 1, H, W]` tensor.
    pub fn image_tensor<E: Element>(&self, index: usize) -> Result<Tensor<E>> {
        let size = self.image_size();
        let data: Vec<E> = self.image(index).iter().map(|&v| E::of_f64(v as f64)).collect();
        Tensor::from_vec(data, &[1, 1, size, size])
    }
}

fn read_f32(dir: &Path, name: &str, expect: usize) -> Result<Vec<f32>> {
    let p = dir.join(name);
    let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
    if bytes.len() != expect * 4 {
        return Err(Error::corrupt(format!(
            "{name}: {} bytes, expected {}",
            bytes.len(),
            expect * 4
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn read_u32(dir: &Path, name: &str, expect: usize) -> Result<Vec<u32>> {
    let p = dir.join(name);
    let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
    if bytes.len() != expect * 4 {
        return Err(Error::corrupt(format!(
            "{name}: {} bytes, expected {}",
            bytes.len(),
            expect * 4
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]]) as u32)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{generate_dataset, GenConfig};

    fn tiny() -> (tempfile::TempDir, Dataset) {
        let dir = tempfile::tempdir().unwrap();
        let cfg = GenConfig { num_identities: 3, samples_per_id: 4, image_size: 16, seed: 5 };
        generate_dataset(&cfg, dir.path()).unwrap();
        let ds = Dataset::load(dir.path()).unwrap();
        (dir, ds)
    }

    #[test]
    fn loads_counts_and_layout() {
        let (_d, ds) = tiny();
        assert_eq!(ds.num_train(), 12);
        assert_eq!(ds.num_total(), 12 + 3 * 16);
        assert_eq!(ds.keypoint_dim(), 20);
        assert_eq!(ds.label(0), 0);
        assert_eq!(ds.label(ds.grid_index(2, 0)), 2);
        assert_eq!(ds.train_indices_of(1).len(), 4);
    }

    #[test]
    fn batch_shapes() {
        let (_d, ds) = tiny();
        let b = ds.batch::<f32>(&[0, 5, 11]).unwrap();
        assert_eq!(b.images.shape(), &[3, 1, 16, 16]);
        assert_eq!(b.keypoints.shape(), &[3, 20]);
        assert_eq!(b.labels, vec![0, 1, 2]);
    }

    #[test]
    fn truncation_detected() {
        let (dir, _ds) = tiny();
        let p = dir.path().join(IMAGES_FILE);
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(Dataset::load(dir.path()), Err(Error::Corrupt(_))));
    }

    #[test]
    fn grid_records_match_generator() {
        let (_d, ds) = tiny();
        let g = crate::synthgen::grid_semantics();
        for id in 0..3 {
            for (gi, s) in g.iter().enumerate() {
                let idx = ds.grid_index(id, gi);
                let rec = crate::synthgen::make_record(s, ds.style(id), id, 16);
                assert_eq!(ds.image(idx), &rec.image[..]);
                assert_eq!(ds.keypoint(idx), &rec.keypoints[..]);
            }
        }
    }
}
