//! IDX ingestion, the MNIST6-180 task and a synthetic stand-in for it.
//!
//! MNIST6-180 keeps only the digit 6 and rotates a fair-coin half of the images
//! by 180°; the label says whether the image was rotated. Rotation is exact
//! index reversal, so a strictly rotation-invariant classifier sees identical
//! inputs for both classes.

use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Side length of MNIST and synthetic glyph images.
pub const IMAGE_SIDE: usize = 28;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Full,
    Train,
    Val,
    Test,
}

/// Grayscale images stored as bytes; pixel value `b / 255`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImageSet {
    pub height: usize,
    pub width: usize,
    pub n_classes: usize,
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
    pub split: Split,
}

impl LabeledImageSet {
    pub fn new(
        height: usize,
        width: usize,
        n_classes: usize,
        pixels: Vec<u8>,
        labels: Vec<u8>,
        split: Split,
    ) -> Result<Self> {
        let n = labels.len();
        if pixels.len() != n * height * width {
            return Err(Error::CountMismatch {
                images: pixels.len() / (height * width).max(1),
                labels: n,
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= n_classes) {
            return Err(Error::Data(format!(
                "label {bad} outside {n_classes} classes"
            )));
        }
        Ok(Self {
            height,
            width,
            n_classes,
            pixels,
            labels,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_len(&self) -> usize {
        self.height * self.width
    }

    pub fn raw(&self, i: usize) -> &[u8] {
        &self.pixels[i * self.image_len()..(i + 1) * self.image_len()]
    }

    /// Image `i` with values in `[0, 1]`.
    pub fn image(&self, i: usize) -> Vec<f64> {
        self.raw(i).iter().map(|&b| b as f64 / 255.0).collect()
    }

    pub fn subset(&self, indices: &[usize], split: Split) -> LabeledImageSet {
        let mut pixels = Vec::with_capacity(indices.len() * self.image_len());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            pixels.extend_from_slice(self.raw(i));
            labels.push(self.labels[i]);
        }
        LabeledImageSet {
            pixels,
            labels,
            split,
            ..self.clone()
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &l in &self.labels {
            c[l as usize] += 1;
        }
        c
    }
}

/// 180° rotation of a row-major image: the reversed pixel order.
pub fn rotate_180(image: &[u8]) -> Vec<u8> {
    image.iter().rev().copied().collect()
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

fn check_header(path: &Path, bytes: &[u8], magic: u32, header_len: usize) -> Result<()> {
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: header_len,
            found: bytes.len(),
        });
    }
    let found = read_u32(bytes, 0);
    if found != magic {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: magic,
            found,
        });
    }
    if bytes.len() < header_len {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: header_len,
            found: bytes.len(),
        });
    }
    Ok(())
}

/// Reads an IDX image file: `(count, rows, cols, pixels)`.
pub fn read_idx_images(path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let bytes = fs::read(path)?;
    check_header(path, &bytes, IDX_IMAGES_MAGIC, 16)?;
    let (n, rows, cols) = (
        read_u32(&bytes, 4) as usize,
        read_u32(&bytes, 8) as usize,
        read_u32(&bytes, 12) as usize,
    );
    let expected = 16 + n * rows * cols;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    Ok((n, rows, cols, bytes[16..expected].to_vec()))
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = fs::read(path)?;
    check_header(path, &bytes, IDX_LABELS_MAGIC, 8)?;
    let n = read_u32(&bytes, 4) as usize;
    if bytes.len() < 8 + n {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: 8 + n,
            found: bytes.len(),
        });
    }
    Ok(bytes[8..8 + n].to_vec())
}

/// Loads an image/label IDX pair as a 10-class set.
pub fn load_idx(images: &Path, labels: &Path) -> Result<LabeledImageSet> {
    let (n, rows, cols, pixels) = read_idx_images(images)?;
    let labels = read_idx_labels(labels)?;
    if labels.len() != n {
        return Err(Error::CountMismatch {
            images: n,
            labels: labels.len(),
        });
    }
    let n_classes = labels
        .iter()
        .copied()
        .max()
        .map_or(1, |m| m as usize + 1)
        .max(10);
    LabeledImageSet::new(rows, cols, n_classes, pixels, labels, Split::Full)
}

pub fn write_idx_images(path: &Path, rows: usize, cols: usize, pixels: &[u8]) -> Result<()> {
    let n = pixels.len() / (rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IDX_IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    fs::write(path, out)?;
    Ok(())
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    fs::write(path, out)?;
    Ok(())
}

/// Keeps the 6's of `source` and rotates each by 180° on a fair seeded coin.
/// Label 1 marks a rotated image.
pub fn build_mnist6_180(source: &LabeledImageSet, seed: u64) -> Result<LabeledImageSet> {
    let sixes: Vec<usize> = (0..source.len())
        .filter(|&i| source.labels[i] == 6)
        .collect();
    if sixes.is_empty() {
        return Err(Error::Data("source set contains no 6's".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pixels = Vec::with_capacity(sixes.len() * source.image_len());
    let mut labels = Vec::with_capacity(sixes.len());
    for i in sixes {
        let flip = rng.random_bool(0.5);
        if flip {
            pixels.extend(rotate_180(source.raw(i)));
        } else {
            pixels.extend_from_slice(source.raw(i));
        }
        labels.push(flip as u8);
    }
    LabeledImageSet::new(source.height, source.width, 2, pixels, labels, source.split)
}

/// L2 distance between a glyph and its 180° rotation, on `[0, 1]` values.
pub fn rotation_asymmetry(image: &[u8]) -> f64 {
    image
        .iter()
        .zip(image.iter().rev())
        .map(|(&a, &b)| ((a as f64 - b as f64) / 255.0).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Minimum asymmetry every synthetic glyph satisfies.
pub const MIN_GLYPH_ASYMMETRY: f64 = 0.5;

/// Renders one "6": a closed loop in the lower half and a stroke that leaves
/// its left side and curls up to the top right.
fn render_six(rng: &mut ChaCha8Rng) -> Vec<u8> {
    let side = IMAGE_SIDE as f64;
    let scale = rng.random_range(0.85..1.15);
    let tilt: f64 = rng.random_range(-0.25..0.25);
    let (cx, cy) = (
        side / 2.0 + rng.random_range(-2.0..2.0),
        side / 2.0 + rng.random_range(-2.0..2.0),
    );
    let thickness = rng.random_range(1.0..1.8);
    let loop_r = rng.random_range(4.0..5.5) * scale;
    let loop_squash = rng.random_range(0.8..1.1);
    let stem_bend = rng.random_range(0.6..1.3);
    let stem_len = rng.random_range(10.0..13.0) * scale;

    // glyph-frame polyline, y grows downwards, loop centred below the origin
    let mut pts: Vec<(f64, f64)> = Vec::new();
    let loop_c = (0.0, 4.0 * scale);
    for k in 0..=48 {
        let t = TAU * k as f64 / 48.0;
        pts.push((
            loop_c.0 + loop_r * t.cos(),
            loop_c.1 + loop_r * loop_squash * t.sin(),
        ));
    }
    let mut stem = Vec::new();
    for k in 0..=32 {
        let s = k as f64 / 32.0;
        // from the left of the loop, up and over to the right
        let a = PI + s * stem_bend * 0.5 * PI;
        let r = loop_r + s * (stem_len - loop_r).max(1.0);
        stem.push((
            loop_c.0 + r * a.cos() * (1.0 - 0.5 * s) + s * 3.0 * scale,
            loop_c.1 + r * a.sin() * 1.1 - s * 2.0,
        ));
    }

    let (ct, st) = (tilt.cos(), tilt.sin());
    let place = |(x, y): (f64, f64)| (cx + ct * x - st * y, cy + st * x + ct * y);
    let segments: Vec<((f64, f64), (f64, f64))> = [pts, stem]
        .iter()
        .flat_map(|curve| {
            let placed: Vec<_> = curve.iter().map(|&p| place(p)).collect();
            placed.windows(2).map(|w| (w[0], w[1])).collect::<Vec<_>>()
        })
        .collect();

    let mut img = vec![0u8; IMAGE_SIDE * IMAGE_SIDE];
    for row in 0..IMAGE_SIDE {
        for col in 0..IMAGE_SIDE {
            let p = (col as f64 + 0.5, row as f64 + 0.5);
            let d = segments
                .iter()
                .map(|&(a, b)| segment_distance(p, a, b))
                .fold(f64::INFINITY, f64::min);
            let v = (thickness + 0.5 - d).clamp(0.0, 1.0);
            img[row * IMAGE_SIDE + col] = (v * 255.0).round() as u8;
        }
    }
    img
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
}

/// `n` synthetic 6-like glyphs labeled with the MNIST6-180 protocol.
pub fn synth_glyph_set(n: usize, seed: u64) -> Result<LabeledImageSet> {
    if n < 2 {
        return Err(Error::Data("synthetic set needs n >= 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pixels = Vec::with_capacity(n * IMAGE_SIDE * IMAGE_SIDE);
    let mut labels = Vec::with_capacity(n);
    while labels.len() < n {
        let glyph = render_six(&mut rng);
        if rotation_asymmetry(&glyph) <= MIN_GLYPH_ASYMMETRY {
            continue;
        }
        let flip = rng.random_bool(0.5);
        if flip {
            pixels.extend(rotate_180(&glyph));
        } else {
            pixels.extend(glyph);
        }
        labels.push(flip as u8);
    }
    LabeledImageSet::new(IMAGE_SIDE, IMAGE_SIDE, 2, pixels, labels, Split::Full)
}

/// Seeded disjoint split into `(train, val, test)` with the given sizes.
pub fn split(
    set: &LabeledImageSet,
    n_train: usize,
    n_val: usize,
    n_test: usize,
    seed: u64,
) -> Result<[LabeledImageSet; 3]> {
    if n_train + n_val + n_test > set.len() {
        return Err(Error::Data(format!(
            "split needs {} images, set has {}",
            n_train + n_val + n_test,
            set.len()
        )));
    }
    let mut idx: Vec<usize> = (0..set.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok([
        set.subset(&idx[..n_train], Split::Train),
        set.subset(&idx[n_train..n_train + n_val], Split::Val),
        set.subset(&idx[n_train + n_val..n_train + n_val + n_test], Split::Test),
    ])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheManifest {
    pub count: usize,
    pub height: usize,
    pub width: usize,
    pub n_classes: usize,
    pub split: Split,
    pub pixels_file: String,
    pub labels_file: String,
    pub source: String,
}

/// Writes `pixels.u8`, `labels.u8` and `manifest.json` into `dir`.
pub fn save_cache(dir: &Path, set: &LabeledImageSet, source: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("pixels.u8"), &set.pixels)?;
    fs::write(dir.join("labels.u8"), &set.labels)?;
    let manifest = CacheManifest {
        count: set.len(),
        height: set.height,
        width: set.width,
        n_classes: set.n_classes,
        split: set.split,
        pixels_file: "pixels.u8".into(),
        labels_file: "labels.u8".into(),
        source: source.into(),
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

pub fn load_cache(dir: &Path) -> Result<LabeledImageSet> {
    let manifest: CacheManifest = serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
    let pixels = fs::read(dir.join(&manifest.pixels_file))?;
    let labels = fs::read(dir.join(&manifest.labels_file))?;
    if labels.len() != manifest.count {
        return Err(Error::CountMismatch {
            images: manifest.count,
            labels: labels.len(),
        });
    }
    LabeledImageSet::new(
        manifest.height,
        manifest.width,
        manifest.n_classes,
        pixels,
        labels,
        manifest.split,
    )
}
