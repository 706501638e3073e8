//! Big-endian IDX files (the MNIST distribution format).

use std::fs;
use std::path::Path;

use super::LocalDataset;
use crate::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;
const MAX_LABEL: u8 = 9;

struct Reader<'a> {
    path: &'a Path,
    bytes: Vec<u8>,
    pos: usize,
}

impl<'a> Reader<'a> {
    fn open(path: &'a Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path,
            bytes,
            pos: 0,
        })
    }

    fn fail(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::Ingestion {
            path: self.path.to_path_buf(),
            offset: offset as u64,
            message: message.into(),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        let end = self.pos + 4;
        let chunk = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| self.fail(self.pos, "truncated header"))?;
        let v = u32::from_be_bytes(chunk.try_into().expect("4-byte slice"));
        self.pos = end;
        Ok(v)
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(self.fail(
                self.bytes.len(),
                format!("truncated {what}: need {n} bytes after offset {}", self.pos),
            ));
        };
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
}

fn read_images(path: &Path) -> Result<(Vec<f64>, usize, usize)> {
    let mut r = Reader::open(path)?;
    let magic = r.u32()?;
    if magic != IMAGES_MAGIC {
        return Err(r.fail(
            0,
            format!("bad magic 0x{magic:08x}, expected 0x{IMAGES_MAGIC:08x}"),
        ));
    }
    let count = r.u32()? as usize;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let dim = rows * cols;
    if dim == 0 {
        return Err(r.fail(8, "zero-sized images"));
    }
    let total = count
        .checked_mul(dim)
        .ok_or_else(|| r.fail(4, "image count overflows"))?;
    let pixels = r.take(total, "pixel data")?;
    let features = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    Ok((features, count, dim))
}

fn read_labels(path: &Path) -> Result<Vec<u32>> {
    let mut r = Reader::open(path)?;
    let magic = r.u32()?;
    if magic != LABELS_MAGIC {
        return Err(r.fail(
            0,
            format!("bad magic 0x{magic:08x}, expected 0x{LABELS_MAGIC:08x}"),
        ));
    }
    let count = r.u32()? as usize;
    let start = r.pos;
    let raw = r.take(count, "label data")?;
    if let Some(i) = raw.iter().position(|&l| l > MAX_LABEL) {
        let bad = raw[i];
        return Err(r.fail(start + i, format!("label {bad} outside 0-{MAX_LABEL}")));
    }
    Ok(raw.iter().map(|&l| u32::from(l)).collect())
}

/// Loads an images/labels pair; pixels are scaled to `[0, 1]`.
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<LocalDataset> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let (features, count, dim) = read_images(images_path)?;
    let labels = read_labels(labels_path)?;
    if labels.len() != count {
        return Err(Error::Ingestion {
            path: labels_path.to_path_buf(),
            offset: 4,
            message: format!(
                "count mismatch: {} labels for {count} images in {}",
                labels.len(),
                images_path.display()
            ),
        });
    }
    LocalDataset::new(features, labels, dim)
}

/// Writes an IDX image file from raw 8-bit pixels.
pub fn write_idx_images(path: impl AsRef<Path>, rows: u32, cols: u32, pixels: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let per = (rows * cols) as usize;
    if per == 0 || !pixels.len().is_multiple_of(per) {
        return Err(Error::Contract(
            "pixel buffer is not a whole number of images".into(),
        ));
    }
    let mut out = Vec::with_capacity(16 + pixels.len());
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&((pixels.len() / per) as u32).to_be_bytes());
    out.extend_from_slice(&rows.to_be_bytes());
    out.extend_from_slice(&cols.to_be_bytes());
    out.extend_from_slice(pixels);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
