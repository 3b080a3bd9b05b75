//! DGRD, the bit-exact density-grid exchange format.
//!
//! Layout, all little-endian:
//!
//! ```text
//! bytes 0..4    magic "DGRD"
//! bytes 4..8    rows  (u32)
//! bytes 8..12   cols  (u32)
//! then          rows * cols cell values (IEEE-754 f32), row-major
//! final 8       scale (IEEE-754 f64), cells per source pixel
//! ```
//!
//! This is the contract between external density predictors and the
//! evaluation harness: any process that writes these bytes interoperates.
//! Cells are stored in 32-bit precision, so writing quantizes the
//! in-memory f64 grid once; reading is exact, and a read grid re-encodes
//! to identical bytes.

use crate::density::DensityMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"DGRD";

/// Fixed overhead: magic + rows + cols + trailing scale.
const HEADER_LEN: usize = 12;
const TRAILER_LEN: usize = 8;

#[derive(Debug, Error)]
pub enum DgrdError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic {0:?}, expected \"DGRD\"")]
    BadMagic([u8; 4]),
    #[error("truncated file: {0} bytes is shorter than the fixed layout")]
    Truncated(usize),
    #[error("grid dimensions {rows}x{cols} are invalid")]
    BadDimensions { rows: u32, cols: u32 },
    #[error("file holds {found} bytes, a {rows}x{cols} grid needs {expected}")]
    LengthMismatch {
        rows: u32,
        cols: u32,
        expected: u64,
        found: usize,
    },
    #[error("cell {index} holds {value} (values must be finite and non-negative)")]
    BadValue { index: usize, value: f32 },
    #[error("scale {0} must be positive and finite")]
    BadScale(f64),
}

pub fn to_bytes(map: &DensityMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * map.values().len() + TRAILER_LEN);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&(map.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(map.cols() as u32).to_le_bytes());
    for v in map.values() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out.extend_from_slice(&map.scale().to_le_bytes());
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<DensityMap, DgrdError> {
    if bytes.len() < HEADER_LEN + TRAILER_LEN {
        return Err(DgrdError::Truncated(bytes.len()));
    }
    let mut magic = [0u8; 4];
    magic.copy_from_slice(&bytes[..4]);
    if magic != MAGIC {
        return Err(DgrdError::BadMagic(magic));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if rows == 0 || cols == 0 {
        return Err(DgrdError::BadDimensions { rows, cols });
    }
    let cells = rows as u64 * cols as u64;
    let expected = HEADER_LEN as u64 + 4 * cells + TRAILER_LEN as u64;
    if bytes.len() as u64 != expected {
        return Err(DgrdError::LengthMismatch {
            rows,
            cols,
            expected,
            found: bytes.len(),
        });
    }
    let mut values = Vec::with_capacity(cells as usize);
    for index in 0..cells as usize {
        let off = HEADER_LEN + 4 * index;
        let value = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        if !(value >= 0.0 && value.is_finite()) {
            return Err(DgrdError::BadValue { index, value });
        }
        values.push(value as f64);
    }
    let scale = f64::from_le_bytes(bytes[bytes.len() - TRAILER_LEN..].try_into().unwrap());
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(DgrdError::BadScale(scale));
    }
    Ok(DensityMap::new(rows as usize, cols as usize, values, scale)
        .expect("every grid field was validated above"))
}

pub fn write(map: &DensityMap, path: &Path) -> Result<(), DgrdError> {
    let mut file = fs::File::create(path)?;
    file.write_all(&to_bytes(map))?;
    Ok(())
}

pub fn read(path: &Path) -> Result<DensityMap, DgrdError> {
    from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn random_map(rows: usize, cols: usize, rng: &mut SplitMix64) -> DensityMap {
        // f32-representable cells: the exchange precision.
        let values: Vec<f64> = (0..rows * cols)
            .map(|_| (rng.next_f64() as f32) as f64)
            .collect();
        DensityMap::new(rows, cols, values, 1.0).unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let mut rng = SplitMix64::new(11);
        let map = random_map(13, 29, &mut rng);
        let bytes = to_bytes(&map);
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back, map);
        assert_eq!(to_bytes(&back), bytes);
        assert_eq!(back.integrate(), map.integrate());
    }

    #[test]
    fn layout_is_pinned() {
        let map = DensityMap::new(1, 2, vec![0.5, 1.5], 0.25).unwrap();
        let bytes = to_bytes(&map);
        let mut expected = Vec::new();
        expected.extend_from_slice(b"DGRD");
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.extend_from_slice(&0.5f32.to_le_bytes());
        expected.extend_from_slice(&1.5f32.to_le_bytes());
        expected.extend_from_slice(&0.25f64.to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn rejects_corrupt_input() {
        let map = DensityMap::new(2, 2, vec![0.0; 4], 1.0).unwrap();
        let good = to_bytes(&map);

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(from_bytes(&bad_magic), Err(DgrdError::BadMagic(_))));

        assert!(matches!(from_bytes(&good[..10]), Err(DgrdError::Truncated(_))));

        let mut short = good.clone();
        short.truncate(good.len() - 4);
        assert!(matches!(from_bytes(&short), Err(DgrdError::LengthMismatch { .. })));

        let mut negative = good.clone();
        negative[12..16].copy_from_slice(&(-1.0f32).to_le_bytes());
        assert!(matches!(from_bytes(&negative), Err(DgrdError::BadValue { .. })));

        let mut bad_scale = good;
        let len = bad_scale.len();
        bad_scale[len - 8..].copy_from_slice(&0.0f64.to_le_bytes());
        assert!(matches!(from_bytes(&bad_scale), Err(DgrdError::BadScale(_))));
    }
}
