//! Raw tensor serialization: a little-endian element buffer in `<name>.bin`
//! plus a JSON sidecar `<name>.json` recording `{name, shape, dtype}`.
//! Checkpoints and the dataset format build on this.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Dtype, Element};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TensorMeta {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: Dtype,
}

pub fn bin_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.bin"))
}

pub fn sidecar_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.json"))
}

/// Write `<dir>/<name>.bin` and `<dir>/<name>.json`.
pub fn write_tensor<E: Element>(dir: &Path, name: &str, shape: &[usize], data: &[E]) -> Result<()> {
    let meta = TensorMeta {
        name: name.to_string(),
        shape: shape.to_vec(),
        dtype: E::DTYPE,
    };
    let mut bytes = Vec::with_capacity(data.len() * E::DTYPE.size_bytes());
    for &v in data {
        v.append_le_bytes(&mut bytes);
    }
    let bp = bin_path(dir, name);
    fs::write(&bp, &bytes).map_err(|e| Error::io(&bp, e))?;
    let sp = sidecar_path(dir, name);
    let json = serde_json::to_string_pretty(&meta).expect("tensor meta serializes");
    fs::write(&sp, json).map_err(|e| Error::io(&sp, e))?;
    Ok(())
}

/// Read a tensor written by [`write_tensor`], validating dtype and length.
pub fn read_tensor<E: Element>(dir: &Path, name: &str) -> Result<(TensorMeta, Vec<E>)> {
    let sp = sidecar_path(dir, name);
    let json = fs::read_to_string(&sp).map_err(|e| Error::io(&sp, e))?;
    let meta: TensorMeta = serde_json::from_str(&json)
        .map_err(|e| Error::corrupt(format!("tensor sidecar {}: {e}", sp.display())))?;
    if meta.dtype != E::DTYPE {
        return Err(Error::corrupt(format!(
            "tensor {name}: stored dtype {} but {} requested",
            meta.dtype.as_str(),
            E::DTYPE.as_str()
        )));
    }
    let bp = bin_path(dir, name);
    let bytes = fs::read(&bp).map_err(|e| Error::io(&bp, e))?;
    let width = E::DTYPE.size_bytes();
    let expect: usize = meta.shape.iter().product::<usize>() * width;
    if bytes.len() != expect {
        return Err(Error::corrupt(format!(
            "tensor {name}: {} bytes on disk, shape {:?} implies {}",
            bytes.len(),
            meta.shape,
            expect
        )));
    }
    let data = bytes.chunks_exact(width).map(E::read_le_bytes).collect();
    Ok((meta, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let data: Vec<f32> = vec![0.1, -2.5, f32::MIN_POSITIVE, 1e30];
        write_tensor(dir.path(), "enc.w", &[2, 2], &data).unwrap();
        let (meta, back) = read_tensor::<f32>(dir.path(), "enc.w").unwrap();
        assert_eq!(meta.shape, vec![2, 2]);
        assert_eq!(back, data);
    }

    #[test]
    fn dtype_mismatch_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        write_tensor::<f32>(dir.path(), "t", &[2], &[1.0, 2.0]).unwrap();
        let err = read_tensor::<f64>(dir.path(), "t").unwrap_err();
        assert!(matches!(err, Error::Corrupt(_)));
    }

    #[test]
    fn missing_file_is_io_error_naming_the_tensor() {
        let dir = tempfile::tempdir().unwrap();
        let err = read_tensor::<f32>(dir.path(), "absent").unwrap_err();
        match err {
            Error::Io { path, .. } => assert!(path.to_string_lossy().contains("absent")),
            other => panic!("expected io error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_buffer_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        write_tensor::<f32>(dir.path(), "t", &[4], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let bp = bin_path(dir.path(), "t");
        let bytes = std::fs::read(&bp).unwrap();
        std::fs::write(&bp, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(read_tensor::<f32>(dir.path(), "t"), Err(Error::Corrupt(_))));
    }
}
