//! Image datasets for the variational autoencoder experiments: an IDX-format
//! reader (the MNIST container format) and a synthetic striped-image
//! generator for self-contained runs.
//!
//! Pixels are stored as grayscale intensities in [0, 1]. Binary training
//! draws fresh Bernoulli(intensity) pixels each time an image is used
//! (dynamic binarization); continuous training maps intensities affinely to
//! [-1, 1].

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// A set of equally sized grayscale images with optional labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    images: Vec<Vec<f64>>,
    rows: usize,
    cols: usize,
    labels: Option<Vec<u8>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Pixels per image.
    pub fn dim(&self) -> usize {
        self.rows * self.cols
    }

    /// Grayscale intensities of image `idx`, each in [0, 1].
    pub fn intensities(&self, idx: usize) -> &[f64] {
        &self.images[idx]
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    /// Fresh Bernoulli draw per pixel with the intensity as success
    /// probability.
    pub fn binarized(&self, idx: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.images[idx]
            .iter()
            .map(|&p| if rng.gen::<f64>() < p { 1.0 } else { 0.0 })
            .collect()
    }

    /// Intensities mapped affinely onto [-1, 1]: 0 -> -1, 1 -> 1.
    pub fn continuous(&self, idx: usize) -> Vec<f64> {
        self.images[idx].iter().map(|&p| 2.0 * p - 1.0).collect()
    }

    /// Deterministic synthetic dataset of striped binary images: each image
    /// picks an orientation, a stripe period, and a phase, then flips about
    /// ten percent of its pixels. The stripes give a latent-variable model
    /// real structure to learn while the flips keep images from repeating.
    pub fn synthetic(n: usize, rows: usize, cols: usize, seed: u64) -> Self {
        use rand::SeedableRng;
        assert!(rows > 0 && cols > 0, "images must be non-empty");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let images = (0..n)
            .map(|_| {
                let vertical = rng.gen::<f64>() < 0.5;
                let period = rng.gen_range(2..5usize);
                let phase = rng.gen_range(0..period);
                let mut img = Vec::with_capacity(rows * cols);
                for r in 0..rows {
                    for c in 0..cols {
                        let line = if vertical { c } else { r };
                        let on = ((line + phase) / period) % 2 == 0;
                        let flip = rng.gen::<f64>() < 0.1;
                        img.push(if on != flip { 1.0 } else { 0.0 });
                    }
                }
                img
            })
            .collect();
        Self { images, rows, cols, labels: None }
    }
}

fn read_u32_be(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::DatasetFormat(format!("file truncated reading {what}")));
    }
    Ok(u32::from_be_bytes(bytes[offset..end].try_into().unwrap()))
}

/// Read images (and optionally labels) from IDX files: big-endian magic
/// 0x00000803 for images (count, rows, cols, then one byte per pixel) and
/// 0x00000801 for labels. Pixel bytes are scaled by 1/255.
pub fn load_mnist_idx(images_path: &Path, labels_path: Option<&Path>) -> Result<Dataset> {
    let bytes = std::fs::read(images_path)?;
    let magic = read_u32_be(&bytes, 0, "image magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::DatasetFormat(format!(
            "bad image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"
        )));
    }
    let count = read_u32_be(&bytes, 4, "image count")? as usize;
    let rows = read_u32_be(&bytes, 8, "row count")? as usize;
    let cols = read_u32_be(&bytes, 12, "column count")? as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::DatasetFormat(format!("degenerate image shape {rows}x{cols}")));
    }
    let pixel_bytes = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::DatasetFormat("image dimensions overflow".into()))?;
    let body = &bytes[16.min(bytes.len())..];
    if body.len() != pixel_bytes {
        return Err(Error::DatasetFormat(format!(
            "expected {pixel_bytes} pixel bytes, found {}",
            body.len()
        )));
    }
    let images = body
        .chunks(rows * cols)
        .map(|chunk| chunk.iter().map(|&b| f64::from(b) / 255.0).collect())
        .collect::<Vec<Vec<f64>>>();

    let labels = match labels_path {
        None => None,
        Some(path) => {
            let bytes = std::fs::read(path)?;
            let magic = read_u32_be(&bytes, 0, "label magic")?;
            if magic != IDX_LABELS_MAGIC {
                return Err(Error::DatasetFormat(format!(
                    "bad label magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"
                )));
            }
            let n = read_u32_be(&bytes, 4, "label count")? as usize;
            if n != count {
                return Err(Error::DatasetFormat(format!(
                    "label count {n} does not match image count {count}"
                )));
            }
            let body = &bytes[8.min(bytes.len())..];
            if body.len() != n {
                return Err(Error::DatasetFormat(format!(
                    "expected {n} label bytes, found {}",
                    body.len()
                )));
            }
            Some(body.to_vec())
        }
    };

    Ok(Dataset { images, rows, cols, labels })
}
