//! MNIST IDX ingestion.
//!
//! Both formats start with a big-endian `u32` magic number and item count;
//! image files add row and column counts. Pixels are scaled by `1/255`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Vector};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const IMAGE_SIDE: usize = 28;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Labeled images with every pixel in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Dataset {
    images: Matrix,
    labels: Vec<usize>,
    split: Split,
}

impl Dataset {
    pub fn new(images: Matrix, labels: Vec<usize>, split: Split) -> Result<Self> {
        if images.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} images but {} labels",
                images.rows(),
                labels.len()
            )));
        }
        if let Some(i) = images
            .as_slice()
            .iter()
            .position(|p| !(0.0..=1.0).contains(p))
        {
            return Err(Error::Input(format!(
                "pixel {} of image {} is outside [0, 1]",
                i % images.cols(),
                i / images.cols()
            )));
        }
        Ok(Dataset {
            images,
            labels,
            split,
        })
    }

    pub fn images(&self) -> &Matrix {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> Vector {
        self.images.row_vector(i)
    }

    /// The first `n` samples (or all of them if there are fewer).
    pub fn take(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            images: self.images.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            split: self.split,
        }
    }

    pub fn class_indices(&self, class_index: usize) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.labels[i] == class_index)
            .collect()
    }
}

fn read_be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    let b = bytes.get(offset..offset + 4).ok_or(Error::Length {
        expected: offset + 4,
        found: bytes.len(),
    })?;
    Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

/// Parses an IDX3 image file into an `N × 784` matrix.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Matrix> {
    let magic = read_be_u32(bytes, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Format(format!(
            "image file magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}"
        )));
    }
    let count = read_be_u32(bytes, 4)? as usize;
    let rows = read_be_u32(bytes, 8)? as usize;
    let cols = read_be_u32(bytes, 12)? as usize;
    if rows != IMAGE_SIDE || cols != IMAGE_SIDE {
        return Err(Error::Format(format!(
            "images are {rows}x{cols}, expected {IMAGE_SIDE}x{IMAGE_SIDE}"
        )));
    }
    let expected = 16 + count * IMAGE_PIXELS;
    if bytes.len() < expected {
        return Err(Error::Length {
            expected,
            found: bytes.len(),
        });
    }
    let data = bytes[16..expected]
        .iter()
        .map(|&p| f64::from(p) / 255.0)
        .collect();
    Matrix::new(count, IMAGE_PIXELS, data)
}

/// Parses an IDX1 label file; every label must be a digit.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = read_be_u32(bytes, 0)?;
    if magic != LABEL_MAGIC {
        return Err(Error::Format(format!(
            "label file magic {magic:#010x}, expected {LABEL_MAGIC:#010x}"
        )));
    }
    let count = read_be_u32(bytes, 4)? as usize;
    let expected = 8 + count;
    if bytes.len() < expected {
        return Err(Error::Length {
            expected,
            found: bytes.len(),
        });
    }
    bytes[8..expected]
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            if l > 9 {
                Err(Error::Format(format!("label {i} is {l}, outside 0..=9")))
            } else {
                Ok(usize::from(l))
            }
        })
        .collect()
}

/// Encodes 8-bit pixels as an IDX3 image file.
pub fn encode_idx_images(pixels: &[[u8; IMAGE_PIXELS]]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + pixels.len() * IMAGE_PIXELS);
    out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    out.extend_from_slice(&(pixels.len() as u32).to_be_bytes());
    out.extend_from_slice(&(IMAGE_SIDE as u32).to_be_bytes());
    out.extend_from_slice(&(IMAGE_SIDE as u32).to_be_bytes());
    for img in pixels {
        out.extend_from_slice(img);
    }
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Loads one split from the four standard file names in `dir`.
pub fn load_split(dir: &Path, split: Split) -> Result<Dataset> {
    let (img, lbl) = match split {
        Split::Train => (TRAIN_IMAGES, TRAIN_LABELS),
        Split::Test => (TEST_IMAGES, TEST_LABELS),
    };
    let images = parse_idx_images(&read_file(&dir.join(img))?)?;
    let labels = parse_idx_labels(&read_file(&dir.join(lbl))?)?;
    Dataset::new(images, labels, split)
}

/// Mean image of one class.
pub fn class_mean(data: &Dataset, class_index: usize) -> Result<Vector> {
    let idx = data.class_indices(class_index);
    if idx.is_empty() {
        return Err(Error::Input(format!("class {class_index} has no samples")));
    }
    let mut sum = vec![0.0; data.images().cols()];
    for &i in &idx {
        for (s, p) in sum.iter_mut().zip(data.images().row(i)) {
            *s += p;
        }
    }
    let n = idx.len() as f64;
    Ok(Vector::new(sum.into_iter().map(|s| s / n).collect()))
}
