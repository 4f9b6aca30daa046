//! Deterministic procedural generator of a multi-identity face dataset
//! with ground-truth shared semantics.
//!
//! Every sample is a grayscale face rendered from (semantics, identity):
//! four semantic factors shared across identities drive the landmark
//! layout through a per-coordinate affine map, and the identity style
//! contributes geometry scaling, intensity, contrast, and a small fixed
//! per-landmark jitter. Identity and semantics are independent by
//! construction, and for a fixed seed the whole dataset regenerates
//! byte-for-byte.
//!
//! Style parameters and the affine coefficients are snapped to a 1/1024
//! grid, so the affine landmark map evaluates exactly in f64 for dyadic
//! semantic inputs; the linearity oracle in the tests relies on this.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{streams, SeedRng};

/// Semantic factors: mouth_open, mouth_width, eye_open, brow_raise.
pub const NUM_SEMANTICS: usize = 4;
/// 10 landmarks: 4 mouth, 2 per eye, 1 per brow.
pub const NUM_LANDMARKS: usize = 10;
pub const KEYPOINT_DIM: usize = 2 * NUM_LANDMARKS;
/// The cross-identity correspondence set: all corners of `[0,1]^4`.
pub const GRID_POINTS: usize = 16;

const SNAP: f64 = 1024.0;

fn snap(v: f64) -> f64 {
    (v * SNAP).round() / SNAP
}

/// Identity-specific appearance parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityStyle {
    /// Face half-extents as fractions of the image, in `[0.5, 0.9]`.
    pub face_width: f64,
    pub face_height: f64,
    /// Face fill intensity in `[0.3, 0.7]`.
    pub base_intensity: f64,
    /// Scales how far feature intensity deviates from the face, `[0.5, 1.5]`.
    pub contrast: f64,
    /// Fixed per-coordinate landmark jitter, each `|offset| <= 0.05`.
    pub feature_offsets: Vec<f64>,
}

impl IdentityStyle {
    /// Style of identity `id` under dataset seed `seed`; fully determined
    /// by the pair.
    pub fn sample(seed: u64, id: usize) -> Self {
        let mut rng = SeedRng::stream(seed ^ (id as u64).wrapping_mul(0x517C_C1B7_2722_0A95), streams::STYLE);
        let mut offsets = vec![0.0f64; KEYPOINT_DIM];
        for (c, o) in offsets.iter_mut().enumerate() {
            // lip/eyelid vertical coordinates get less jitter so feature
            // openings can never invert
            let limit = if matches!(c, 5 | 7 | 9 | 11 | 13 | 15) { 0.01 } else { 0.05 };
            *o = snap(rng.uniform_f64(-limit, limit));
        }
        IdentityStyle {
            face_width: snap(rng.uniform_f64(0.5, 0.9)),
            face_height: snap(rng.uniform_f64(0.5, 0.9)),
            base_intensity: snap(rng.uniform_f64(0.3, 0.7)),
            contrast: snap(rng.uniform_f64(0.5, 1.5)),
            feature_offsets: offsets,
        }
    }

    /// Componentwise interpolation between two styles (used to fabricate
    /// held-out identities from existing ones).
    pub fn blend(a: &IdentityStyle, b: &IdentityStyle, t: f64) -> Self {
        let lerp = |x: f64, y: f64| snap(x + t * (y - x));
        IdentityStyle {
            face_width: lerp(a.face_width, b.face_width),
            face_height: lerp(a.face_height, b.face_height),
            base_intensity: lerp(a.base_intensity, b.base_intensity),
            contrast: lerp(a.contrast, b.contrast),
            feature_offsets: a
                .feature_offsets
                .iter()
                .zip(&b.feature_offsets)
                .map(|(&x, &y)| lerp(x, y))
                .collect(),
        }
    }
}

/// Shared semantic factors, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemanticFactors(pub [f64; NUM_SEMANTICS]);

impl SemanticFactors {
    pub fn validate(&self) -> Result<()> {
        if self.0.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::contract(format!("semantics {:?} outside [0,1]", self.0)));
        }
        Ok(())
    }

    pub fn uniform(rng: &mut SeedRng) -> Self {
        let mut s = [0.0; NUM_SEMANTICS];
        for v in s.iter_mut() {
            *v = rng.uniform_f64(0.0, 1.0);
        }
        SemanticFactors(s)
    }
}

const SEM_MOUTH_OPEN: usize = 0;
const SEM_MOUTH_WIDTH: usize = 1;
const SEM_EYE_OPEN: usize = 2;
const SEM_BROW_RAISE: usize = 3;

/// Per-coordinate affine map `k[c] = base[c] + s[dep[c]] * span[c]`.
struct AffineMap {
    base: [f64; KEYPOINT_DIM],
    span: [f64; KEYPOINT_DIM],
    dep: [usize; KEYPOINT_DIM],
}

/// Landmark order (x,y interleaved):
/// 0 mouth_left, 1 mouth_right, 2 lip_top, 3 lip_bottom,
/// 4 left_eye_upper, 5 left_eye_lower, 6 right_eye_upper,
/// 7 right_eye_lower, 8 left_brow, 9 right_brow.
fn affine_map(style: &IdentityStyle) -> AffineMap {
    let a = style.face_width;
    let b = style.face_height;
    let o = &style.feature_offsets;
    let mut base = [0.0; KEYPOINT_DIM];
    let mut span = [0.0; KEYPOINT_DIM];
    let mut dep = [0usize; KEYPOINT_DIM];

    let mut set = |land: usize, axis: usize, k0: f64, sp: f64, d: usize| {
        let c = 2 * land + axis;
        base[c] = k0 + o[c];
        span[c] = sp;
        dep[c] = d;
    };

    // mouth corners: x widens with mouth_width
    set(0, 0, -0.1875 * a, -0.25 * a, SEM_MOUTH_WIDTH);
    set(0, 1, 0.375 * b, 0.0, 0);
    set(1, 0, 0.1875 * a, 0.25 * a, SEM_MOUTH_WIDTH);
    set(1, 1, 0.375 * b, 0.0, 0);
    // lips: y separates with mouth_open
    set(2, 0, 0.0, 0.0, 0);
    set(2, 1, 0.375 * b - 0.0625 * b, -0.1875 * b, SEM_MOUTH_OPEN);
    set(3, 0, 0.0, 0.0, 0);
    set(3, 1, 0.375 * b + 0.0625 * b, 0.1875 * b, SEM_MOUTH_OPEN);
    // eyelids: y separates with eye_open
    for (land, sx) in [(4usize, -1.0f64), (6, 1.0)] {
        set(land, 0, sx * 0.375 * a, 0.0, 0);
        set(land, 1, -0.1875 * b - 0.03125 * b, -0.125 * b, SEM_EYE_OPEN);
        set(land + 1, 0, sx * 0.375 * a, 0.0, 0);
        set(land + 1, 1, -0.1875 * b + 0.03125 * b, 0.125 * b, SEM_EYE_OPEN);
    }
    // brows: y rises with brow_raise
    set(8, 0, -0.375 * a, 0.0, 0);
    set(8, 1, -0.34375 * b, -0.125 * b, SEM_BROW_RAISE);
    set(9, 0, 0.375 * a, 0.0, 0);
    set(9, 1, -0.34375 * b, -0.125 * b, SEM_BROW_RAISE);

    AffineMap { base, span, dep }
}

/// Landmark positions for semantics `s` under `style`, normalized to
/// `[-1, 1]` by the image half-extent, interleaved `[x0, y0, x1, y1, ...]`.
pub fn keypoints_from(s: &SemanticFactors, style: &IdentityStyle) -> Vec<f64> {
    let map = affine_map(style);
    (0..KEYPOINT_DIM)
        .map(|c| map.base[c] + s.0[map.dep[c]] * map.span[c])
        .collect()
}

/// Invert the affine landmark map given the known style. Exact on clean
/// keypoints; a least-squares-style average over the redundant coordinates
/// when applied to decoded ones.
pub fn semantics_from_keypoints(k: &[f64], style: &IdentityStyle) -> SemanticFactors {
    let map = affine_map(style);
    let mut num = [0.0f64; NUM_SEMANTICS];
    let mut den = [0.0f64; NUM_SEMANTICS];
    for c in 0..KEYPOINT_DIM {
        if map.span[c] != 0.0 {
            num[map.dep[c]] += (k[c] - map.base[c]) * map.span[c];
            den[map.dep[c]] += map.span[c] * map.span[c];
        }
    }
    let mut s = [0.0; NUM_SEMANTICS];
    for j in 0..NUM_SEMANTICS {
        s[j] = if den[j] > 0.0 { num[j] / den[j] } else { 0.0 };
    }
    SemanticFactors(s)
}

// ---------------------------------------------------------------------------
// Rendering

fn coverage(distance_px: f64) -> f64 {
    (0.5 - distance_px).clamp(0.0, 1.0)
}

/// Approximate signed distance (normalized units) to an axis-aligned
/// ellipse boundary; negative inside.
fn ellipse_distance(x: f64, y: f64, cx: f64, cy: f64, rx: f64, ry: f64) -> f64 {
    let dx = (x - cx) / rx;
    let dy = (y - cy) / ry;
    let q = dx * dx + dy * dy;
    let gx = 2.0 * dx / rx;
    let gy = 2.0 * dy / ry;
    let gn = (gx * gx + gy * gy).sqrt();
    if gn < 1e-9 {
        -rx.min(ry)
    } else {
        (q - 1.0) / gn
    }
}

/// Signed distance to a convex polygon as the max over edge half-planes.
/// Vertices wind clockwise on screen (y pointing down); negative inside.
fn convex_poly_distance(x: f64, y: f64, verts: &[(f64, f64)]) -> f64 {
    let mut d = f64::NEG_INFINITY;
    let n = verts.len();
    for i in 0..n {
        let (x0, y0) = verts[i];
        let (x1, y1) = verts[(i + 1) % n];
        let ex = x1 - x0;
        let ey = y1 - y0;
        let len = (ex * ex + ey * ey).sqrt().max(1e-9);
        let nx = ey / len;
        let ny = -ex / len;
        d = d.max((x - x0) * nx + (y - y0) * ny);
    }
    d
}

fn segment_distance(x: f64, y: f64, x0: f64, y0: f64, x1: f64, y1: f64) -> f64 {
    let ex = x1 - x0;
    let ey = y1 - y0;
    let len2 = (ex * ex + ey * ey).max(1e-12);
    let t = (((x - x0) * ex + (y - y0) * ey) / len2).clamp(0.0, 1.0);
    let px = x0 + t * ex;
    let py = y0 + t * ey;
    ((x - px) * (x - px) + (y - py) * (y - py)).sqrt()
}

/// Anti-aliased grayscale rasterization of a face from its landmarks.
///
/// Face ellipse at the style's base intensity, mouth as a filled quad
/// between the lip landmarks, eyes as ellipses whose height tracks the lid
/// separation, brows as line segments. Deterministic; no noise.
pub fn render(keypoints: &[f64], style: &IdentityStyle, image_size: usize) -> Vec<f32> {
    assert_eq!(keypoints.len(), KEYPOINT_DIM, "expected {KEYPOINT_DIM} keypoint coordinates");
    let w = image_size;
    let px = 2.0 / image_size as f64;
    let lm = |i: usize| (keypoints[2 * i], keypoints[2 * i + 1]);

    let feature_val = (style.base_intensity - 0.3 * style.contrast).clamp(0.0, 1.0);
    let mouth = [lm(0), lm(2), lm(1), lm(3)];
    let eye_rx = 0.09375 * style.face_width;
    let eyes: Vec<(f64, f64, f64)> = [(4usize, 5usize), (6, 7)]
        .iter()
        .map(|&(u, l)| {
            let (ux, uy) = lm(u);
            let (_, ly) = lm(l);
            ((ux), (uy + ly) * 0.5, ((ly - uy) * 0.5).max(0.01))
        })
        .collect();
    let brow_half = 0.125 * style.face_width;
    let brow_thick = 0.035;
    let brows: Vec<((f64, f64), (f64, f64))> = [8usize, 9]
        .iter()
        .map(|&i| {
            let (x, y) = lm(i);
            ((x - brow_half, y), (x + brow_half, y))
        })
        .collect();

    let mut img = vec![0.0f32; w * w];
    img.par_chunks_mut(w).enumerate().for_each(|(py, row)| {
        let y = (2.0 * py as f64 + 1.0) / image_size as f64 - 1.0;
        for (pxi, out) in row.iter_mut().enumerate() {
            let x = (2.0 * pxi as f64 + 1.0) / image_size as f64 - 1.0;
            let mut v = 0.0f64;

            let d_face = ellipse_distance(x, y, 0.0, 0.0, style.face_width, style.face_height);
            let c = coverage(d_face / px);
            v = v * (1.0 - c) + style.base_intensity * c;

            let c = coverage(convex_poly_distance(x, y, &mouth) / px);
            v = v * (1.0 - c) + feature_val * c;

            for &(ex, ey, ry) in &eyes {
                let c = coverage(ellipse_distance(x, y, ex, ey, eye_rx, ry) / px);
                v = v * (1.0 - c) + feature_val * c;
            }
            for &((x0, y0), (x1, y1)) in &brows {
                let d = segment_distance(x, y, x0, y0, x1, y1) - brow_thick;
                let c = coverage(d / px);
                v = v * (1.0 - c) + feature_val * c;
            }
            *out = v.clamp(0.0, 1.0) as f32;
        }
    });
    img
}

// ---------------------------------------------------------------------------
// Dataset generation

/// One training example.
#[derive(Debug, Clone)]
pub struct SampleRecord {
    /// `[1, H, W]` grayscale in `[0, 1]`.
    pub image: Vec<f32>,
    /// Flattened landmark vector in `[-1, 1]`.
    pub keypoints: Vec<f32>,
    pub identity: usize,
    pub semantics: SemanticFactors,
}

/// The 16 canonical semantic grid points: corners of `[0,1]^4` in binary
/// counting order (bit j drives semantic j).
pub fn grid_semantics() -> Vec<SemanticFactors> {
    (0..GRID_POINTS)
        .map(|g| {
            let mut s = [0.0; NUM_SEMANTICS];
            for (j, v) in s.iter_mut().enumerate() {
                *v = ((g >> j) & 1) as f64;
            }
            SemanticFactors(s)
        })
        .collect()
}

/// Render one record from (semantics, style). Keypoints are rounded to f32
/// first and the image rendered from those rounded values, so the stored
/// pair satisfies `image == render(keypoints)` exactly.
pub fn make_record(s: &SemanticFactors, style: &IdentityStyle, identity: usize, image_size: usize) -> SampleRecord {
    let k64 = keypoints_from(s, style);
    let keypoints: Vec<f32> = k64.iter().map(|&v| v as f32).collect();
    let k_back: Vec<f64> = keypoints.iter().map(|&v| v as f64).collect();
    let image = render(&k_back, style, image_size);
    SampleRecord { image, keypoints, identity, semantics: *s }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub num_identities: usize,
    pub samples_per_id: usize,
    pub image_size: usize,
    pub seed: u64,
}

/// Contents of `manifest.json` in a dataset directory. Record order is the
/// training block (identity-major) followed by the correspondence block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub config: GenConfig,
    pub seed: u64,
    pub keypoint_dim: usize,
    pub semantics_dim: usize,
    pub grid_per_id: usize,
    pub num_train: usize,
    pub num_grid: usize,
    pub styles: Vec<IdentityStyle>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const IMAGES_FILE: &str = "images.bin";
pub const KEYPOINTS_FILE: &str = "keypoints.bin";
pub const LABELS_FILE: &str = "labels.bin";
pub const SEMANTICS_FILE: &str = "semantics.bin";

/// Generate the dataset under `out_dir`: raw little-endian record files
/// plus `manifest.json`. Fully determined by `config`.
pub fn generate_dataset(config: &GenConfig, out_dir: &Path) -> Result<DatasetManifest> {
    crate::configure_threads_from_env();
    if config.num_identities < 2 {
        return Err(Error::contract(format!(
            "generate_dataset: need at least 2 identities, got {}",
            config.num_identities
        )));
    }
    if config.samples_per_id == 0 || config.image_size == 0 {
        return Err(Error::contract("generate_dataset: empty geometry"));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let styles: Vec<IdentityStyle> = (0..config.num_identities)
        .map(|id| IdentityStyle::sample(config.seed, id))
        .collect();

    // semantics for the whole training block come from one seeded stream,
    // drawn in record order
    let mut sem_rng = SeedRng::stream(config.seed, streams::SEMANTICS);
    let mut plan: Vec<(usize, SemanticFactors)> = Vec::new();
    for id in 0..config.num_identities {
        for _ in 0..config.samples_per_id {
            plan.push((id, SemanticFactors::uniform(&mut sem_rng)));
        }
    }
    let num_train = plan.len();
    for id in 0..config.num_identities {
        for g in grid_semantics() {
            plan.push((id, g));
        }
    }
    let num_grid = plan.len() - num_train;

    let records: Vec<SampleRecord> = plan
        .par_iter()
        .map(|(id, s)| make_record(s, &styles[*id], *id, config.image_size))
        .collect();

    let manifest = DatasetManifest {
        config: config.clone(),
        seed: config.seed,
        keypoint_dim: KEYPOINT_DIM,
        semantics_dim: NUM_SEMANTICS,
        grid_per_id: GRID_POINTS,
        num_train,
        num_grid,
        styles,
    };
    write_records(out_dir, &manifest, &records)?;
    Ok(manifest)
}

fn write_records(dir: &Path, manifest: &DatasetManifest, records: &[SampleRecord]) -> Result<()> {
    let open = |name: &str| -> Result<std::io::BufWriter<fs::File>> {
        let p = dir.join(name);
        Ok(std::io::BufWriter::new(
            fs::File::create(&p).map_err(|e| Error::io(&p, e))?,
        ))
    };
    let werr = |name: &str, e: std::io::Error| Error::io(dir.join(name), e);

    let mut images = open(IMAGES_FILE)?;
    let mut keypoints = open(KEYPOINTS_FILE)?;
    let mut labels = open(LABELS_FILE)?;
    let mut semantics = open(SEMANTICS_FILE)?;
    for r in records {
        for &v in &r.image {
            images.write_all(&v.to_le_bytes()).map_err(|e| werr(IMAGES_FILE, e))?;
        }
        for &v in &r.keypoints {
            keypoints.write_all(&v.to_le_bytes()).map_err(|e| werr(KEYPOINTS_FILE, e))?;
        }
        labels
            .write_all(&(r.identity as i32).to_le_bytes())
            .map_err(|e| werr(LABELS_FILE, e))?;
        for v in r.semantics.0 {
            semantics
                .write_all(&(v as f32).to_le_bytes())
                .map_err(|e| werr(SEMANTICS_FILE, e))?;
        }
    }
    images.flush().map_err(|e| werr(IMAGES_FILE, e))?;
    keypoints.flush().map_err(|e| werr(KEYPOINTS_FILE, e))?;
    labels.flush().map_err(|e| werr(LABELS_FILE, e))?;
    semantics.flush().map_err(|e| werr(SEMANTICS_FILE, e))?;

    let mp = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(&mp, json).map_err(|e| Error::io(&mp, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn style() -> IdentityStyle {
        IdentityStyle::sample(7, 0)
    }

    #[test]
    fn style_is_deterministic_and_in_range() {
        for id in 0..8 {
            let a = IdentityStyle::sample(7, id);
            let b = IdentityStyle::sample(7, id);
            assert_eq!(a, b);
            assert!((0.5..=0.9).contains(&a.face_width));
            assert!((0.5..=0.9).contains(&a.face_height));
            assert!((0.3..=0.7).contains(&a.base_intensity));
            assert!((0.5..=1.5).contains(&a.contrast));
            assert!(a.feature_offsets.iter().all(|o| o.abs() <= 0.05));
        }
        assert_ne!(IdentityStyle::sample(7, 0), IdentityStyle::sample(7, 1));
        assert_ne!(IdentityStyle::sample(7, 0), IdentityStyle::sample(8, 0));
    }

    #[test]
    fn neutral_semantics_give_base_layout() {
        let s = SemanticFactors([0.0; 4]);
        let k = keypoints_from(&s, &style());
        assert_eq!(k.len(), KEYPOINT_DIM);
        // closed mouth: lip separation is at its base opening
        let sep = k[7] - k[5];
        let expect = 0.125 * style().face_height
            + (style().feature_offsets[7] - style().feature_offsets[5]);
        assert!((sep - expect).abs() < 1e-12);
        assert!(k.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn keypoints_affine_linearity_is_exact() {
        // dyadic semantics evaluate the affine map without rounding, so the
        // midpoint identity holds with zero tolerance
        let st = style();
        for s_full in [
            SemanticFactors([1.0, 1.0, 1.0, 1.0]),
            SemanticFactors([1.0, 0.5, 0.0, 0.25]),
            SemanticFactors([0.5, 0.25, 1.0, 0.75]),
        ] {
            let zero = SemanticFactors([0.0; 4]);
            let half = SemanticFactors([
                0.5 * s_full.0[0],
                0.5 * s_full.0[1],
                0.5 * s_full.0[2],
                0.5 * s_full.0[3],
            ]);
            let k0 = keypoints_from(&zero, &st);
            let k1 = keypoints_from(&s_full, &st);
            let km = keypoints_from(&half, &st);
            for c in 0..KEYPOINT_DIM {
                let mid = (k0[c] + k1[c]) * 0.5;
                assert_eq!(km[c], mid, "coordinate {c}");
            }
        }
    }

    #[test]
    fn same_semantics_across_identities_stay_close() {
        // construction bound: every coefficient of the geometry scale is
        // < 1, plus two jitters of at most 0.05 each
        let s = SemanticFactors([0.3, 0.9, 0.2, 0.7]);
        let (id0, id1) = (IdentityStyle::sample(7, 0), IdentityStyle::sample(7, 1));
        let k0 = keypoints_from(&s, &id0);
        let k1 = keypoints_from(&s, &id1);
        let geo = (id0.face_width - id1.face_width)
            .abs()
            .max((id0.face_height - id1.face_height).abs());
        for c in 0..KEYPOINT_DIM {
            assert!((k0[c] - k1[c]).abs() <= geo + 0.1 + 1e-12, "coord {c}");
        }
    }

    #[test]
    fn render_range_and_determinism() {
        let s = SemanticFactors([0.5, 0.5, 0.5, 0.5]);
        let k = keypoints_from(&s, &style());
        let a = render(&k, &style(), 32);
        let b = render(&k, &style(), 32);
        assert_eq!(a, b);
        assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
        // face actually covers something
        assert!(a.iter().filter(|&&v| v > 0.0).count() > 200);
    }

    #[test]
    fn mouth_open_changes_enough_pixels() {
        for id in 0..4 {
            let st = IdentityStyle::sample(7, id);
            let closed = keypoints_from(&SemanticFactors([0.0, 0.5, 0.5, 0.5]), &st);
            let open = keypoints_from(&SemanticFactors([1.0, 0.5, 0.5, 0.5]), &st);
            let ic = render(&closed, &st, 32);
            let io = render(&open, &st, 32);
            let changed = ic
                .iter()
                .zip(&io)
                .filter(|(a, b)| (**a - **b).abs() >= 0.1)
                .count();
            assert!(changed * 100 >= ic.len(), "id {id}: only {changed} pixels changed");
        }
    }

    #[test]
    fn record_invariants_hold_exactly() {
        let st = style();
        let r = make_record(&SemanticFactors([0.1, 0.9, 0.4, 0.6]), &st, 0, 32);
        let k64: Vec<f64> = keypoints_from(&r.semantics, &st);
        let expect_k: Vec<f32> = k64.iter().map(|&v| v as f32).collect();
        assert_eq!(r.keypoints, expect_k);
        let kb: Vec<f64> = r.keypoints.iter().map(|&v| v as f64).collect();
        assert_eq!(r.image, render(&kb, &st, 32));
    }

    #[test]
    fn grid_is_all_corners() {
        let g = grid_semantics();
        assert_eq!(g.len(), 16);
        let mut seen = std::collections::HashSet::new();
        for s in &g {
            assert!(s.0.iter().all(|&v| v == 0.0 || v == 1.0));
            seen.insert(s.0.map(|v| v as u8));
        }
        assert_eq!(seen.len(), 16);
    }

    #[test]
    fn semantics_invert_from_keypoints() {
        let st = style();
        let s = SemanticFactors([0.3, 0.8, 0.15, 0.65]);
        let k = keypoints_from(&s, &st);
        let back = semantics_from_keypoints(&k, &st);
        for (a, b) in s.0.iter().zip(back.0) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn rejects_single_identity() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = GenConfig { num_identities: 1, samples_per_id: 4, image_size: 16, seed: 1 };
        assert!(matches!(
            generate_dataset(&cfg, dir.path()),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn regeneration_is_byte_identical() {
        let cfg = GenConfig { num_identities: 3, samples_per_id: 5, image_size: 16, seed: 11 };
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        generate_dataset(&cfg, d1.path()).unwrap();
        generate_dataset(&cfg, d2.path()).unwrap();
        for f in [MANIFEST_FILE, IMAGES_FILE, KEYPOINTS_FILE, LABELS_FILE, SEMANTICS_FILE] {
            let a = std::fs::read(d1.path().join(f)).unwrap();
            let b = std::fs::read(d2.path().join(f)).unwrap();
            assert_eq!(a, b, "{f} differs");
        }
    }

    #[test]
    fn seed_changes_semantics_but_not_layout() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let mk = |seed| GenConfig { num_identities: 2, samples_per_id: 3, image_size: 16, seed };
        let m1 = generate_dataset(&mk(1), d1.path()).unwrap();
        let m2 = generate_dataset(&mk(2), d2.path()).unwrap();
        assert_eq!(m1.num_train, m2.num_train);
        assert_eq!(m1.num_grid, m2.num_grid);
        let s1 = std::fs::read(d1.path().join(SEMANTICS_FILE)).unwrap();
        let s2 = std::fs::read(d2.path().join(SEMANTICS_FILE)).unwrap();
        assert_ne!(s1, s2);
    }
}
