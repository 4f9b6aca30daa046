//! Binary PGM (P5) image files, the bit-exact grayscale interchange format
//! of the CLI. Values in `[0,1]` map to `round(v * 255)` with ties away
//! from zero; reading divides by 255.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[f32]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::contract(format!(
            "write_pgm: {}x{} needs {} pixels, got {}",
            width,
            height,
            width * height,
            pixels.len()
        )));
    }
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    bytes.extend(pixels.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Read a P5 file written by [`write_pgm`] (or any maxval-255 P5).
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let corrupt = |msg: &str| Error::corrupt(format!("{}: {msg}", path.display()));

    let mut pos = 0usize;
    let mut token = |bytes: &[u8]| -> Result<String> {
        // skip whitespace and '#' comment lines
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::corrupt(format!("{}: truncated header", path.display())));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    if token(&bytes)? != "P5" {
        return Err(corrupt("not a binary PGM (P5)"));
    }
    let width: usize = token(&bytes)?.parse().map_err(|_| corrupt("bad width"))?;
    let height: usize = token(&bytes)?.parse().map_err(|_| corrupt("bad height"))?;
    let maxval: usize = token(&bytes)?.parse().map_err(|_| corrupt("bad maxval"))?;
    if maxval != 255 {
        return Err(corrupt("only maxval 255 is supported"));
    }
    pos += 1; // single whitespace byte after maxval
    if bytes.len() < pos + width * height {
        return Err(corrupt("pixel data truncated"));
    }
    let pixels = bytes[pos..pos + width * height]
        .iter()
        .map(|&b| b as f32 / 255.0)
        .collect();
    Ok((width, height, pixels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_quantizes_once() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("img.pgm");
        let pixels: Vec<f32> = (0..64).map(|i| i as f32 / 63.0).collect();
        write_pgm(&p, 8, 8, &pixels).unwrap();
        let (w, h, back) = read_pgm(&p).unwrap();
        assert_eq!((w, h), (8, 8));
        for (a, b) in pixels.iter().zip(&back) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
        // a second write of the read-back bytes is identical
        let p2 = dir.path().join("img2.pgm");
        write_pgm(&p2, 8, 8, &back).unwrap();
        assert_eq!(fs::read(&p).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn rejects_non_p5() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("img.pgm");
        fs::write(&p, b"P2\n2 2\n255\n0 1 2 3\n").unwrap();
        assert!(matches!(read_pgm(&p), Err(Error::Corrupt(_))));
    }

    #[test]
    fn rejects_truncated_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("img.pgm");
        fs::write(&p, b"P5\n4 4\n255\nab").unwrap();
        assert!(matches!(read_pgm(&p), Err(Error::Corrupt(_))));
    }
}
