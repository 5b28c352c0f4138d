//! MNIST IDX files: big-endian headers, `u8` payloads.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::Scalar;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

/// Grayscale digits scaled to `[0, 1]` with their class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDigits {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<Scalar>,
    pub labels: Vec<u8>,
}

impl RawDigits {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[Scalar] {
        let p = self.rows * self.cols;
        &self.pixels[i * p..(i + 1) * p]
    }

    /// Digits `range.start..range.end`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> RawDigits {
        let p = self.rows * self.cols;
        RawDigits {
            rows: self.rows,
            cols: self.cols,
            pixels: self.pixels[range.start * p..range.end * p].to_vec(),
            labels: self.labels[range].to_vec(),
        }
    }
}

pub fn load_mnist_idx(images: &Path, labels: &Path) -> Result<RawDigits> {
    let (n, rows, cols, pixels) = parse_idx_images(&fs::read(images)?)?;
    let labels = parse_idx_labels(&fs::read(labels)?)?;
    if labels.len() != n {
        return Err(Error::data(format!(
            "{n} images but {} labels",
            labels.len()
        )));
    }
    Ok(RawDigits {
        rows,
        cols,
        pixels,
        labels,
    })
}

/// `(count, rows, cols, pixels)` of an image file.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<Scalar>)> {
    expect_magic(bytes, IMAGES_MAGIC)?;
    let n = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let body = payload(bytes, 16, n * rows * cols)?;
    Ok((
        n,
        rows,
        cols,
        body.iter().map(|&b| b as Scalar / 255.0).collect(),
    ))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    expect_magic(bytes, LABELS_MAGIC)?;
    let n = read_u32(bytes, 4)? as usize;
    Ok(payload(bytes, 8, n)?.to_vec())
}

fn expect_magic(bytes: &[u8], want: u32) -> Result<()> {
    let got = read_u32(bytes, 0)?;
    if got != want {
        return Err(Error::format(
            0,
            format!("magic {got:#010x}, expected {want:#010x}"),
        ));
    }
    Ok(())
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| {
            Error::format(
                bytes.len() as u64,
                format!("header truncated, need 4 bytes at {offset}"),
            )
        })
}

fn payload(bytes: &[u8], offset: usize, len: usize) -> Result<&[u8]> {
    let end = offset + len;
    if bytes.len() < end {
        return Err(Error::format(
            bytes.len() as u64,
            format!("payload truncated, expected {len} bytes after offset {offset}"),
        ));
    }
    Ok(&bytes[offset..end])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(magic: u32, dims: &[u32]) -> Vec<u8> {
        let mut v = magic.to_be_bytes().to_vec();
        for d in dims {
            v.extend(d.to_be_bytes());
        }
        v
    }

    #[test]
    fn one_white_image() {
        let mut b = header(IMAGES_MAGIC, &[1, 28, 28]);
        b.extend(std::iter::repeat_n(0xFF, 784));
        let (n, r, c, px) = parse_idx_images(&b).unwrap();
        assert_eq!((n, r, c), (1, 28, 28));
        assert!(px.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn bad_magic_and_truncation_report_offsets() {
        let b = header(LABELS_MAGIC, &[1, 28, 28]);
        assert!(matches!(
            parse_idx_images(&b),
            Err(Error::Format { offset: 0, .. })
        ));
        let mut b = header(IMAGES_MAGIC, &[2, 2, 2]);
        b.extend([0u8; 5]);
        assert!(matches!(
            parse_idx_images(&b),
            Err(Error::Format { offset: 21, .. })
        ));
        assert!(matches!(
            parse_idx_labels(&[0, 0]),
            Err(Error::Format { offset: 2, .. })
        ));
        let mut l = header(LABELS_MAGIC, &[3]);
        l.extend([7, 1, 4]);
        assert_eq!(parse_idx_labels(&l).unwrap(), vec![7, 1, 4]);
    }
}
