// SPDX-License-Identifier: Apache-2.0

//! IDX (MNIST) image and label files.
//!
//! Both files start with a big-endian magic number whose low byte is the
//! dimension count: `0x00000803` for `count × rows × cols` images and
//! `0x00000801` for `count` labels. Each dimension is a big-endian `u32`,
//! followed by the unsigned-byte payload.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{what}: bad magic 0x{found:08x}, expected 0x{expected:08x}")]
    BadMagic {
        what: &'static str,
        found: u32,
        expected: u32,
    },
    #[error("{what}: truncated, expected {expected} bytes but found {actual}")]
    Truncated {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("label {label} at index {index} is not a digit")]
    BadLabel { index: usize, label: u8 },
}

/// A set of greyscale images with their class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rows: usize,
    pub cols: usize,
    /// Row-major pixels in [0, 1], `rows * cols` per image.
    pub pixels: Vec<f32>,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, k: usize) -> &[f32] {
        let size = self.rows * self.cols;
        &self.pixels[k * size..(k + 1) * size]
    }

    /// Images `range.start..range.end`, clamped to the dataset.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Dataset {
        let end = range.end.min(self.len());
        let start = range.start.min(end);
        let size = self.rows * self.cols;
        Dataset {
            rows: self.rows,
            cols: self.cols,
            pixels: self.pixels[start * size..end * size].to_vec(),
            labels: self.labels[start..end].to_vec(),
        }
    }

    /// Reduce every image to `side × side`.
    pub fn resized(&self, side: usize, method: Resize) -> Dataset {
        let mut pixels = Vec::with_capacity(self.len() * side * side);
        for k in 0..self.len() {
            pixels.extend(method.apply(self.image(k), self.rows, self.cols, side));
        }
        Dataset {
            rows: side,
            cols: side,
            pixels,
            labels: self.labels.clone(),
        }
    }
}

/// How larger images are brought down to the network input size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resize {
    #[default]
    CenterCrop,
    Bilinear,
}

impl Resize {
    pub fn apply(self, img: &[f32], rows: usize, cols: usize, side: usize) -> Vec<f32> {
        match self {
            Resize::CenterCrop => {
                let r0 = rows.saturating_sub(side) / 2;
                let c0 = cols.saturating_sub(side) / 2;
                let mut out = Vec::with_capacity(side * side);
                for r in 0..side {
                    for c in 0..side {
                        let (rr, cc) = (r0 + r, c0 + c);
                        out.push(if rr < rows && cc < cols { img[rr * cols + cc] } else { 0.0 });
                    }
                }
                out
            }
            Resize::Bilinear => {
                let mut out = Vec::with_capacity(side * side);
                let sy = rows as f64 / side as f64;
                let sx = cols as f64 / side as f64;
                for r in 0..side {
                    // Pixel-centre alignment.
                    let y = ((r as f64 + 0.5) * sy - 0.5).clamp(0.0, (rows - 1) as f64);
                    let y0 = y.floor() as usize;
                    let y1 = (y0 + 1).min(rows - 1);
                    let fy = y - y0 as f64;
                    for c in 0..side {
                        let x = ((c as f64 + 0.5) * sx - 0.5).clamp(0.0, (cols - 1) as f64);
                        let x0 = x.floor() as usize;
                        let x1 = (x0 + 1).min(cols - 1);
                        let fx = x - x0 as f64;
                        let p = |yy: usize, xx: usize| f64::from(img[yy * cols + xx]);
                        let v = (1.0 - fy) * ((1.0 - fx) * p(y0, x0) + fx * p(y0, x1))
                            + fy * ((1.0 - fx) * p(y1, x0) + fx * p(y1, x1));
                        out.push(v as f32);
                    }
                }
                out
            }
        }
    }
}

fn be_u32(bytes: &[u8], offset: usize) -> u32 {
    u32::from_be_bytes(bytes[offset..offset + 4].try_into().unwrap())
}

fn header(bytes: &[u8], what: &'static str, magic: u32, dims: usize) -> Result<Vec<usize>, IdxError> {
    let head = 4 + 4 * dims;
    if bytes.len() >= 4 {
        let found = be_u32(bytes, 0);
        if found != magic {
            return Err(IdxError::BadMagic {
                what,
                found,
                expected: magic,
            });
        }
    }
    if bytes.len() < head {
        return Err(IdxError::Truncated {
            what,
            expected: head,
            actual: bytes.len(),
        });
    }
    let shape: Vec<usize> = (0..dims).map(|d| be_u32(bytes, 4 + 4 * d) as usize).collect();
    let expected = head + shape.iter().product::<usize>();
    if bytes.len() < expected {
        return Err(IdxError::Truncated {
            what,
            expected,
            actual: bytes.len(),
        });
    }
    Ok(shape)
}

/// Parse an IDX image file: returns `(count, rows, cols, pixels in [0, 1])`.
pub fn parse_images(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<f32>), IdxError> {
    let shape = header(bytes, "images", IMAGE_MAGIC, 3)?;
    let (count, rows, cols) = (shape[0], shape[1], shape[2]);
    let payload = &bytes[16..16 + count * rows * cols];
    let pixels = payload.iter().map(|&b| f32::from(b) / 255.0).collect();
    Ok((count, rows, cols, pixels))
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>, IdxError> {
    let shape = header(bytes, "labels", LABEL_MAGIC, 1)?;
    let labels = bytes[8..8 + shape[0]].to_vec();
    if let Some(index) = labels.iter().position(|&l| l > 9) {
        return Err(IdxError::BadLabel {
            index,
            label: labels[index],
        });
    }
    Ok(labels)
}

fn read(path: &Path) -> Result<Vec<u8>, IdxError> {
    fs::read(path).map_err(|source| IdxError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_mnist_idx(images: &Path, labels: &Path) -> Result<Dataset, IdxError> {
    let (count, rows, cols, pixels) = parse_images(&read(images)?)?;
    let labels = parse_labels(&read(labels)?)?;
    if labels.len() != count {
        return Err(IdxError::CountMismatch {
            images: count,
            labels: labels.len(),
        });
    }
    Ok(Dataset {
        rows,
        cols,
        pixels,
        labels,
    })
}

/// Which standard split to load from a directory of unpacked IDX files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

pub fn load_split(dir: &Path, split: Split) -> Result<Dataset, IdxError> {
    let prefix = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    load_mnist_idx(
        &dir.join(format!("{prefix}-images-idx3-ubyte")),
        &dir.join(format!("{prefix}-labels-idx1-ubyte")),
    )
}

/// Serialize images and labels back to IDX bytes.
pub fn encode_idx(rows: usize, cols: usize, images: &[Vec<u8>], labels: &[u8]) -> (Vec<u8>, Vec<u8>) {
    let mut img = Vec::with_capacity(16 + images.len() * rows * cols);
    img.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    for d in [images.len(), rows, cols] {
        img.extend_from_slice(&(d as u32).to_be_bytes());
    }
    for im in images {
        img.extend_from_slice(im);
    }
    let mut lab = Vec::with_capacity(8 + labels.len());
    lab.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    lab.extend_from_slice(labels);
    (img, lab)
}
