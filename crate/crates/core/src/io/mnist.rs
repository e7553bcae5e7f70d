//! IDX container reader for MNIST-style image/label pairs.

use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 2051;
pub const LABELS_MAGIC: u32 = 2049;

/// Where a split came from.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Provenance {
    pub images_path: Option<PathBuf>,
    pub labels_path: Option<PathBuf>,
    /// Number of leading examples kept, when the split was truncated.
    pub subset: Option<usize>,
    pub subset_seed: Option<u64>,
}

/// Images scaled to `[0, 1]`, one row per example, with labels in `0..10`.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub images: Array2<f64>,
    pub labels: Vec<u8>,
    pub provenance: Provenance,
}

impl DatasetSplit {
    pub fn new(images: Array2<f64>, labels: Vec<u8>) -> Result<Self> {
        if images.nrows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} images but {} labels",
                images.nrows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= 10) {
            return Err(Error::InvalidLabel {
                label: bad as usize,
                classes: 10,
            });
        }
        Ok(Self {
            images,
            labels,
            provenance: Provenance::default(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// The first `n` examples (all of them if `n >= len`).
    pub fn take(&self, n: usize) -> Self {
        let n = n.min(self.len());
        let idx: Vec<usize> = (0..n).collect();
        Self {
            images: self.images.select(Axis(0), &idx),
            labels: self.labels[..n].to_vec(),
            provenance: Provenance {
                subset: Some(n),
                ..self.provenance.clone()
            },
        }
    }
}

fn read_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Corrupt(format!("{what}: truncated header")))
}

/// Parses an image IDX file into `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let magic = read_u32(bytes, 0, "images")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Corrupt(format!(
            "images: magic {magic} (expected {IMAGES_MAGIC})"
        )));
    }
    let n = read_u32(bytes, 4, "images")? as usize;
    let rows = read_u32(bytes, 8, "images")? as usize;
    let cols = read_u32(bytes, 12, "images")? as usize;
    let need = n
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::Corrupt("images: dimensions overflow".into()))?;
    let body = &bytes[16..];
    if body.len() != need {
        return Err(Error::Corrupt(format!(
            "images: header promises {n}x{rows}x{cols} = {need} bytes, file holds {}",
            body.len()
        )));
    }
    Ok((n, rows, cols, body))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<&[u8]> {
    let magic = read_u32(bytes, 0, "labels")?;
    if magic != LABELS_MAGIC {
        return Err(Error::Corrupt(format!(
            "labels: magic {magic} (expected {LABELS_MAGIC})"
        )));
    }
    let n = read_u32(bytes, 4, "labels")? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(Error::Corrupt(format!(
            "labels: header promises {n} labels, file holds {}",
            body.len()
        )));
    }
    Ok(body)
}

/// Reads an image/label IDX pair; pixels are divided by 255.
pub fn load_mnist_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<DatasetSplit> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let image_bytes = std::fs::read(ip).map_err(|e| Error::file(ip, e))?;
    let label_bytes = std::fs::read(lp).map_err(|e| Error::file(lp, e))?;
    let (n, rows, cols, pixels) = parse_idx_images(&image_bytes)?;
    let labels = parse_idx_labels(&label_bytes)?;
    if labels.len() != n {
        return Err(Error::Shape(format!("{n} images but {} labels", labels.len())));
    }
    let images = Array2::from_shape_vec((n, rows * cols), pixels.iter().map(|&p| p as f64 / 255.0).collect())
        .expect("length checked above");
    let mut split = DatasetSplit::new(images, labels.to_vec())?;
    split.provenance.images_path = Some(ip.to_path_buf());
    split.provenance.labels_path = Some(lp.to_path_buf());
    Ok(split)
}

pub fn write_idx_images(path: impl AsRef<Path>, rows: usize, cols: usize, pixels: &[u8]) -> Result<()> {
    let path = path.as_ref();
    if rows * cols == 0 || !pixels.len().is_multiple_of(rows * cols) {
        return Err(Error::Shape("pixel buffer is not a whole number of images".into()));
    }
    let mut out = Vec::with_capacity(16 + pixels.len());
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&((pixels.len() / (rows * cols)) as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    out.extend_from_slice(pixels);
    std::fs::write(path, out).map_err(|e| Error::file(path, e))
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    std::fs::write(path, out).map_err(|e| Error::file(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(dir: &Path) -> (PathBuf, PathBuf) {
        let mut pixels = vec![0u8; 2 * 784];
        pixels[0] = 255;
        pixels[784 + 5] = 51;
        let (ip, lp) = (dir.join("img"), dir.join("lbl"));
        write_idx_images(&ip, 28, 28, &pixels).unwrap();
        write_idx_labels(&lp, &[7, 2]).unwrap();
        (ip, lp)
    }

    #[test]
    fn parses_two_image_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = fixture(dir.path());
        let split = load_mnist_idx(&ip, &lp).unwrap();
        assert_eq!(split.images.dim(), (2, 784));
        assert_eq!(split.labels, vec![7, 2]);
        assert_eq!(split.images[[0, 0]], 1.0);
        assert_eq!(split.images[[1, 5]], 0.2);
    }

    #[test]
    fn swapped_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = fixture(dir.path());
        let err = load_mnist_idx(&lp, &ip).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
        let err = load_mnist_idx(&ip, &ip).unwrap_err();
        assert!(err.to_string().contains("2051"), "{err}");
    }

    #[test]
    fn truncated_and_mismatched_files() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = fixture(dir.path());
        let bytes = std::fs::read(&ip).unwrap();
        std::fs::write(&ip, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(load_mnist_idx(&ip, &lp), Err(Error::Corrupt(_))));
        std::fs::write(&ip, &bytes[..10]).unwrap();
        assert!(matches!(load_mnist_idx(&ip, &lp), Err(Error::Corrupt(_))));
        std::fs::write(&ip, &bytes).unwrap();
        write_idx_labels(&lp, &[1, 2, 3]).unwrap();
        assert!(matches!(load_mnist_idx(&ip, &lp), Err(Error::Shape(_))));
    }

    #[test]
    fn take_keeps_prefix() {
        let images = Array2::from_shape_fn((5, 3), |(i, j)| (i * 3 + j) as f64);
        let split = DatasetSplit::new(images, vec![0, 1, 2, 3, 4]).unwrap();
        let head = split.take(2);
        assert_eq!(head.labels, vec![0, 1]);
        assert_eq!(head.images.row(1).to_vec(), vec![3.0, 4.0, 5.0]);
        assert_eq!(head.provenance.subset, Some(2));
    }
}
