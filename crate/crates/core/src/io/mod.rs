//! Dataset ingestion and persistence.

mod dataset;
mod idx;
mod metric_file;
mod synth;
mod table;

pub use dataset::LabeledSet;
pub use idx::{
    parse_idx_images, parse_idx_labels, read_idx_images, read_idx_labels, write_idx_images,
    write_idx_labels, IDX_IMAGE_MAGIC, IDX_LABEL_MAGIC,
};
pub use metric_file::{
    decode_metric, encode_metric, load_metric, save_metric, METRIC_FORMAT_VERSION,
};
pub use synth::make_blobs;
pub use table::{parse_feature_table, read_feature_table, write_feature_table};

use std::path::Path;

use crate::error::{Error, Result};

/// Reads a whole file, transparently inflating gzip content.
pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    use std::io::Read;
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
