//! Big-endian IDX containers (unsigned-byte images and labels).

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::RasterImage;

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn u32(&mut self, what: &str) -> Result<u32> {
        let end = self.pos + 4;
        let chunk = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| Error::TruncatedFile(format!("header ends before {what}")))?;
        self.pos = end;
        Ok(u32::from_be_bytes(chunk.try_into().unwrap()))
    }

    fn payload(&self, len: usize, what: &str) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if available < len {
            return Err(Error::TruncatedFile(format!(
                "{what}: header promises {len} bytes, {available} present"
            )));
        }
        if available > len {
            return Err(Error::TruncatedFile(format!(
                "{what}: {} bytes beyond the declared payload",
                available - len
            )));
        }
        Ok(&self.bytes[self.pos..])
    }
}

fn expect_magic(found: u32, expected: u32) -> Result<()> {
    if found != expected {
        return Err(Error::BadMagic { expected, found });
    }
    Ok(())
}

/// Parses an IDX image file; bytes are scaled to `[0, 1]` by `/255`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<RasterImage>> {
    let mut c = Cursor { bytes, pos: 0 };
    expect_magic(c.u32("magic")?, IDX_IMAGE_MAGIC)?;
    let count = c.u32("image count")? as usize;
    let rows = c.u32("row count")? as usize;
    let cols = c.u32("column count")? as usize;
    let size = rows * cols;
    let payload = c.payload(count * size, "image payload")?;
    if count > 0 && size == 0 {
        return Err(Error::InvalidInput(
            "IDX images must have nonzero size".into(),
        ));
    }
    payload
        .chunks_exact(size.max(1))
        .take(count)
        .map(|px| RasterImage::new(cols, rows, px.iter().map(|&b| b as f64 / 255.0).collect()))
        .collect()
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut c = Cursor { bytes, pos: 0 };
    expect_magic(c.u32("magic")?, IDX_LABEL_MAGIC)?;
    let count = c.u32("label count")? as usize;
    Ok(c.payload(count, "label payload")?.to_vec())
}

/// Reads IDX images; gzip-compressed files are inflated first.
pub fn read_idx_images(path: impl AsRef<Path>) -> Result<Vec<RasterImage>> {
    parse_idx_images(&super::read_bytes(path.as_ref())?)
}

pub fn read_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    parse_idx_labels(&super::read_bytes(path.as_ref())?)
}

/// Writes uncompressed IDX images, quantizing intensities to bytes.
pub fn write_idx_images(path: impl AsRef<Path>, images: &[RasterImage]) -> Result<()> {
    let (rows, cols) = images
        .first()
        .map(|i| (i.height(), i.width()))
        .unwrap_or((0, 0));
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    for v in [
        IDX_IMAGE_MAGIC,
        images.len() as u32,
        rows as u32,
        cols as u32,
    ] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for img in images {
        if img.height() != rows || img.width() != cols {
            return Err(Error::InvalidInput(
                "IDX images must share one shape".into(),
            ));
        }
        out.extend(img.pixels().iter().map(|&v| (v * 255.0).round() as u8));
    }
    super::write_bytes(path.as_ref(), &out)
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    super::write_bytes(path.as_ref(), &out)
}
