//! Binary feature-dataset files: precomputed backbone features plus labels.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size          | field                     |
//! |--------|---------------|---------------------------|
//! | 0      | 4             | magic `"ZOFC"`            |
//! | 4      | 4             | format version (u32)      |
//! | 8      | 8             | example count (u64)       |
//! | 16     | 4             | feature dim (u32)         |
//! | 20     | 4             | label width (u32)         |
//! | 24     | count*dim*4   | f32 feature rows          |
//! | ...    | count*4       | u32 labels                |
//!
//! The declared count/dim must match the body length exactly, and every label
//! must be below the declared label width.

use std::path::Path;

use crate::error::{CliError, CliResult};

pub const FEATURE_MAGIC: [u8; 4] = *b"ZOFC";
pub const FEATURE_FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

/// Why a feature file was rejected. Each failure mode is distinct so callers
/// can tell a wrong file apart from a damaged one.
#[derive(Debug, PartialEq, Eq, thiserror::Error)]
pub enum FeatureFileError {
    #[error(
        "not a feature file: bad magic {got:02x?} (expected {:02x?})",
        FEATURE_MAGIC
    )]
    BadMagic { got: [u8; 4] },

    #[error("unsupported feature-file version {got} (supported: {FEATURE_FORMAT_VERSION})")]
    UnsupportedVersion { got: u32 },

    #[error("truncated feature file: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("row {row}: label {label} out of range (label width {width})")]
    LabelOutOfRange { row: usize, label: u32, width: u32 },

    #[error("declared shape overflows: count {count} x dim {dim}")]
    ShapeOverflow { count: u64, dim: u32 },
}

impl From<FeatureFileError> for CliError {
    fn from(err: FeatureFileError) -> Self {
        CliError::Data(err.to_string())
    }
}

/// A validated in-memory feature dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    pub dim: u32,
    pub label_width: u32,
    /// Row-major features, one `Vec` per example, widened to f64.
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<u32>,
}

impl FeatureFile {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Parse and validate a feature dataset from raw bytes.
pub fn parse_features(bytes: &[u8]) -> Result<FeatureFile, FeatureFileError> {
    if bytes.len() < HEADER_LEN {
        return Err(FeatureFileError::Truncated {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().expect("fixed slice");
    if magic != FEATURE_MAGIC {
        return Err(FeatureFileError::BadMagic { got: magic });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("fixed slice"));
    if version != FEATURE_FORMAT_VERSION {
        return Err(FeatureFileError::UnsupportedVersion { got: version });
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().expect("fixed slice"));
    let dim = u32::from_le_bytes(bytes[16..20].try_into().expect("fixed slice"));
    let label_width = u32::from_le_bytes(bytes[20..24].try_into().expect("fixed slice"));

    let feature_bytes = (count as usize)
        .checked_mul(dim as usize)
        .and_then(|n| n.checked_mul(4))
        .ok_or(FeatureFileError::ShapeOverflow { count, dim })?;
    let label_bytes = (count as usize)
        .checked_mul(4)
        .ok_or(FeatureFileError::ShapeOverflow { count, dim })?;
    let expected = HEADER_LEN + feature_bytes + label_bytes;
    if bytes.len() != expected {
        return Err(FeatureFileError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }

    let mut features = Vec::with_capacity(count as usize);
    let mut offset = HEADER_LEN;
    for _ in 0..count {
        let mut row = Vec::with_capacity(dim as usize);
        for _ in 0..dim {
            let v = f32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("fixed slice"));
            row.push(v as f64);
            offset += 4;
        }
        features.push(row);
    }
    let mut labels = Vec::with_capacity(count as usize);
    for row in 0..count as usize {
        let label = u32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("fixed slice"));
        offset += 4;
        if label >= label_width {
            return Err(FeatureFileError::LabelOutOfRange {
                row,
                label,
                width: label_width,
            });
        }
        labels.push(label);
    }
    Ok(FeatureFile {
        dim,
        label_width,
        features,
        labels,
    })
}

/// Load and validate a feature dataset from disk.
pub fn load_features(path: &Path) -> CliResult<FeatureFile> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io_data(path, e))?;
    Ok(parse_features(&bytes)?)
}

/// Serialize a dataset to the binary format; the writing counterpart to
/// [`parse_features`].
pub fn encode_features(dim: u32, label_width: u32, rows: &[(Vec<f32>, u32)]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + rows.len() * (dim as usize * 4 + 4));
    out.extend_from_slice(&FEATURE_MAGIC);
    out.extend_from_slice(&FEATURE_FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(rows.len() as u64).to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    out.extend_from_slice(&label_width.to_le_bytes());
    for (row, _) in rows {
        assert_eq!(row.len(), dim as usize, "row width must match declared dim");
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for (_, label) in rows {
        out.extend_from_slice(&label.to_le_bytes());
    }
    out
}

pub fn write_features(
    path: &Path,
    dim: u32,
    label_width: u32,
    rows: &[(Vec<f32>, u32)],
) -> CliResult<()> {
    std::fs::write(path, encode_features(dim, label_width, rows))
        .map_err(|e| CliError::io_data(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_rows() -> Vec<(Vec<f32>, u32)> {
        (0..10)
            .map(|i| {
                let row = vec![i as f32, -(i as f32), 0.5 * i as f32, 1.0];
                (row, (i % 3) as u32)
            })
            .collect()
    }

    #[test]
    fn well_formed_roundtrip() {
        let bytes = encode_features(4, 3, &sample_rows());
        let file = parse_features(&bytes).unwrap();
        assert_eq!(file.len(), 10);
        assert_eq!(file.dim, 4);
        assert_eq!(file.label_width, 3);
        assert_eq!(file.features[2], vec![2.0, -2.0, 1.0, 1.0]);
        assert_eq!(file.labels[4], 1);
    }

    #[test]
    fn bad_magic_rejected() {
        let mut bytes = encode_features(4, 3, &sample_rows());
        bytes[0] = b'X';
        assert!(matches!(
            parse_features(&bytes),
            Err(FeatureFileError::BadMagic { .. })
        ));
    }

    #[test]
    fn version_mismatch_rejected() {
        let mut bytes = encode_features(4, 3, &sample_rows());
        bytes[4..8].copy_from_slice(&99u32.to_le_bytes());
        assert_eq!(
            parse_features(&bytes),
            Err(FeatureFileError::UnsupportedVersion { got: 99 })
        );
    }

    #[test]
    fn truncated_body_names_byte_counts() {
        let bytes = encode_features(4, 3, &sample_rows());
        let expected = bytes.len();
        let cut = &bytes[..bytes.len() - 7];
        assert_eq!(
            parse_features(cut),
            Err(FeatureFileError::Truncated {
                expected,
                actual: expected - 7,
            })
        );
    }

    #[test]
    fn oversized_body_rejected_too() {
        let mut bytes = encode_features(4, 3, &sample_rows());
        bytes.push(0);
        assert!(matches!(
            parse_features(&bytes),
            Err(FeatureFileError::Truncated { .. })
        ));
    }

    #[test]
    fn label_out_of_range_names_row() {
        let mut rows = sample_rows();
        rows[7].1 = 3; // width is 3, so valid labels are 0..=2
        let bytes = encode_features(4, 3, &rows);
        assert_eq!(
            parse_features(&bytes),
            Err(FeatureFileError::LabelOutOfRange {
                row: 7,
                label: 3,
                width: 3,
            })
        );
    }

    #[test]
    fn header_shorter_than_fixed_size_rejected() {
        assert!(matches!(
            parse_features(b"ZOFC"),
            Err(FeatureFileError::Truncated { .. })
        ));
    }
}
