//! Dense flow files.
//!
//! Layout (all little-endian): the 4 ASCII bytes `PIEH`, `i32` width, `i32` height,
//! then `width * height` pairs of `f32` `(fx, fy)` in row-major order. Pixels
//! without a valid vector hold [`UNKNOWN_FLOW`] in both components.

use std::fmt;
use std::path::Path;

use geocorr_core::FlowField;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"PIEH";
pub const HEADER_LEN: usize = 12;
/// Largest accepted width or height.
pub const MAX_DIM: i32 = 32768;
/// Written for invalid pixels.
pub const UNKNOWN_FLOW: f32 = 1e10;
/// Components above this magnitude are read as invalid.
pub const UNKNOWN_THRESHOLD: f32 = 1e9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FlowFormatErrorKind {
    BadMagic([u8; 4]),
    BadDimensions { width: i32, height: i32 },
    Truncated { expected: usize, actual: usize },
    TrailingBytes { expected: usize, actual: usize },
    NonFinite,
}

/// A malformed flow file, located at byte `offset`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowFormatError {
    pub offset: usize,
    pub kind: FlowFormatErrorKind,
}

impl fmt::Display for FlowFormatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "flow format error at byte {}: ", self.offset)?;
        match &self.kind {
            FlowFormatErrorKind::BadMagic(m) => write!(f, "bad magic {m:02x?}, expected \"PIEH\""),
            FlowFormatErrorKind::BadDimensions { width, height } => {
                write!(f, "dimensions {width}x{height} outside 1..={MAX_DIM}")
            }
            FlowFormatErrorKind::Truncated { expected, actual } => {
                write!(f, "truncated: expected {expected} bytes, found {actual}")
            }
            FlowFormatErrorKind::TrailingBytes { expected, actual } => {
                write!(
                    f,
                    "{} trailing bytes after {expected}-byte body end",
                    actual - expected
                )
            }
            FlowFormatErrorKind::NonFinite => write!(f, "non-finite flow component"),
        }
    }
}

impl std::error::Error for FlowFormatError {}

fn fail(offset: usize, kind: FlowFormatErrorKind) -> FlowFormatError {
    FlowFormatError { offset, kind }
}

/// Serializes `flow`; invalid pixels are written as [`UNKNOWN_FLOW`].
pub fn encode_flow(flow: &FlowField) -> Vec<u8> {
    let (w, h) = flow.dims();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * w * h);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&(w as i32).to_le_bytes());
    out.extend_from_slice(&(h as i32).to_le_bytes());
    for y in 0..h {
        for x in 0..w {
            let v = if flow.is_valid(x, y) {
                flow.get(x, y)
            } else {
                [UNKNOWN_FLOW; 2]
            };
            out.extend_from_slice(&v[0].to_le_bytes());
            out.extend_from_slice(&v[1].to_le_bytes());
        }
    }
    out
}

fn read_i32(bytes: &[u8], at: usize) -> i32 {
    i32::from_le_bytes(bytes[at..at + 4].try_into().expect("four bytes"))
}

/// Parses a flow file held in memory.
pub fn decode_flow(bytes: &[u8]) -> Result<FlowField, FlowFormatError> {
    if bytes.len() < 4 {
        return Err(fail(
            bytes.len(),
            FlowFormatErrorKind::Truncated {
                expected: HEADER_LEN,
                actual: bytes.len(),
            },
        ));
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("four bytes");
    if magic != MAGIC {
        return Err(fail(0, FlowFormatErrorKind::BadMagic(magic)));
    }
    if bytes.len() < HEADER_LEN {
        return Err(fail(
            bytes.len(),
            FlowFormatErrorKind::Truncated {
                expected: HEADER_LEN,
                actual: bytes.len(),
            },
        ));
    }
    let (width, height) = (read_i32(bytes, 4), read_i32(bytes, 8));
    for (value, at) in [(width, 4), (height, 8)] {
        if !(1..=MAX_DIM).contains(&value) {
            return Err(fail(
                at,
                FlowFormatErrorKind::BadDimensions { width, height },
            ));
        }
    }
    let (w, h) = (width as usize, height as usize);
    let expected = HEADER_LEN + 8 * w * h;
    if bytes.len() < expected {
        return Err(fail(
            bytes.len(),
            FlowFormatErrorKind::Truncated {
                expected,
                actual: bytes.len(),
            },
        ));
    }
    if bytes.len() > expected {
        return Err(fail(
            expected,
            FlowFormatErrorKind::TrailingBytes {
                expected,
                actual: bytes.len(),
            },
        ));
    }
    let mut vectors = Vec::with_capacity(w * h);
    let mut valid = Vec::with_capacity(w * h);
    for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(8).enumerate() {
        let fx = f32::from_le_bytes(chunk[..4].try_into().expect("four bytes"));
        let fy = f32::from_le_bytes(chunk[4..].try_into().expect("four bytes"));
        for (k, c) in [fx, fy].into_iter().enumerate() {
            if !c.is_finite() {
                return Err(fail(
                    HEADER_LEN + 8 * i + 4 * k,
                    FlowFormatErrorKind::NonFinite,
                ));
            }
        }
        if fx.abs() > UNKNOWN_THRESHOLD || fy.abs() > UNKNOWN_THRESHOLD {
            vectors.push([0.0, 0.0]);
            valid.push(false);
        } else {
            vectors.push([fx, fy]);
            valid.push(true);
        }
    }
    let flow = FlowField::new(w, h, vectors).expect("components checked finite");
    Ok(if valid.iter().all(|v| *v) {
        flow
    } else {
        flow.with_mask(valid).expect("mask length matches")
    })
}

pub fn read_flow(path: &Path) -> Result<FlowField> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_flow(&bytes).map_err(|source| Error::FlowFormat {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `flow` atomically.
pub fn write_flow(path: &Path, flow: &FlowField) -> Result<()> {
    crate::fsutil::write_atomic(path, &encode_flow(flow))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_one_field_layout() {
        let flow = FlowField::new(2, 1, vec![[1.5, -2.0], [0.0, 0.0]]).unwrap();
        let bytes = encode_flow(&flow);
        assert_eq!(bytes.len(), HEADER_LEN + 16);
        assert_eq!(&bytes[..4], b"PIEH");
        assert_eq!(
            f32::from_le_bytes(bytes[..4].try_into().unwrap()),
            202021.25
        );
        assert_eq!(&bytes[4..12], &[2, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &1.5f32.to_le_bytes());
        assert_eq!(decode_flow(&bytes).unwrap(), flow);
    }

    #[test]
    fn invalid_pixels_use_the_sentinel() {
        let flow = FlowField::new(2, 1, vec![[3.0, 4.0], [1.0, 1.0]])
            .unwrap()
            .with_mask(vec![true, false])
            .unwrap();
        let bytes = encode_flow(&flow);
        assert_eq!(&bytes[20..24], &UNKNOWN_FLOW.to_le_bytes());
        let back = decode_flow(&bytes).unwrap();
        assert_eq!(back, flow);
        assert_eq!(encode_flow(&back), bytes);
    }

    #[test]
    fn malformed_inputs_report_offsets() {
        let good = encode_flow(&FlowField::zeros(3, 2));
        let mut bad = good.clone();
        bad[..4].copy_from_slice(&[0xDE, 0xAD, 0xBE, 0xEF]);
        assert!(matches!(
            decode_flow(&bad),
            Err(FlowFormatError {
                offset: 0,
                kind: FlowFormatErrorKind::BadMagic(_)
            })
        ));
        let err = decode_flow(&good[..good.len() - 3]).unwrap_err();
        assert_eq!(err.offset, good.len() - 3);
        assert!(matches!(err.kind, FlowFormatErrorKind::Truncated { .. }));
        let mut long = good.clone();
        long.push(0);
        assert_eq!(decode_flow(&long).unwrap_err().offset, good.len());
        let mut huge = good.clone();
        huge[8..12].copy_from_slice(&40000i32.to_le_bytes());
        assert_eq!(decode_flow(&huge).unwrap_err().offset, 8);
        let mut neg = good.clone();
        neg[4..8].copy_from_slice(&(-1i32).to_le_bytes());
        assert_eq!(decode_flow(&neg).unwrap_err().offset, 4);
        let mut nan = good;
        nan[24..28].copy_from_slice(&f32::NAN.to_le_bytes());
        assert_eq!(
            decode_flow(&nan).unwrap_err(),
            fail(24, FlowFormatErrorKind::NonFinite)
        );
        assert_eq!(decode_flow(b"PI").unwrap_err().offset, 2);
    }
}
