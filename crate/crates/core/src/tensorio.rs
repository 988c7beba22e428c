//! Minimal little-endian tensor container.
//!
//! Layout:
//!
//! | bytes        | content                                  |
//! |--------------|------------------------------------------|
//! | 4            | magic `RAGT`                             |
//! | 1            | version, `1`                             |
//! | 1            | dtype, `1` = f32                         |
//! | 1            | ndim, 1..=4                              |
//! | 4 * ndim     | dims, u32 little-endian                  |
//! | 4 * prod(dims) | row-major f32 little-endian payload    |

use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"RAGT";
pub const VERSION: u8 = 1;
pub const DTYPE_F32: u8 = 1;
pub const MAX_NDIM: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f32>) -> Result<Self> {
        validate_shape(&shape, values.len())?;
        Ok(Tensor { shape, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn validate_shape(shape: &[usize], len: usize) -> Result<()> {
    if shape.is_empty() || shape.len() > MAX_NDIM {
        return Err(Error::param(format!(
            "tensor rank must be 1..={MAX_NDIM}, got {}",
            shape.len()
        )));
    }
    if let Some(d) = shape.iter().find(|&&d| d > u32::MAX as usize) {
        return Err(Error::param(format!("dimension {d} does not fit in u32")));
    }
    let expected = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::param("tensor size overflows"))?;
    if expected != len {
        return Err(Error::param(format!(
            "shape {shape:?} needs {expected} values, got {len}"
        )));
    }
    Ok(())
}

pub fn encode(shape: &[usize], values: &[f32]) -> Result<Vec<u8>> {
    validate_shape(shape, values.len())?;
    let mut out = Vec::with_capacity(7 + 4 * shape.len() + 4 * values.len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(DTYPE_F32);
    out.push(shape.len() as u8);
    for &d in shape {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 7 {
        return Err(Error::format("tensor header truncated"));
    }
    if bytes[..4] != MAGIC {
        return Err(Error::format(format!("bad magic {:?}", &bytes[..4])));
    }
    if bytes[4] != VERSION {
        return Err(Error::format(format!("unsupported version {}", bytes[4])));
    }
    if bytes[5] != DTYPE_F32 {
        return Err(Error::format(format!("unknown dtype {}", bytes[5])));
    }
    let ndim = bytes[6] as usize;
    if ndim == 0 || ndim > MAX_NDIM {
        return Err(Error::format(format!("invalid rank {ndim}")));
    }
    let header = 7 + 4 * ndim;
    if bytes.len() < header {
        return Err(Error::format("tensor dims truncated"));
    }
    let shape: Vec<usize> = bytes[7..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::format("tensor size overflows"))?;
    let payload_len = count
        .checked_mul(4)
        .ok_or_else(|| Error::format("tensor size overflows"))?;
    let payload = &bytes[header..];
    if payload.len() < payload_len {
        return Err(Error::format(format!(
            "payload truncated: expected {payload_len} bytes, found {}",
            payload.len()
        )));
    }
    if payload.len() > payload_len {
        return Err(Error::format(format!(
            "{} trailing bytes after payload",
            payload.len() - payload_len
        )));
    }
    let values = payload[..payload_len]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(Tensor { shape, values })
}

pub fn write_tensor(path: impl AsRef<Path>, shape: &[usize], values: &[f32]) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(shape, values)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_file_bytes() {
        let bytes = encode(&[1], &[0.0]).unwrap();
        assert_eq!(bytes.len(), 15);
        assert_eq!(&bytes[..11], b"RAGT\x01\x01\x01\x01\x00\x00\x00");
        assert_eq!(&bytes[11..], &[0, 0, 0, 0]);
        let t = decode(&bytes).unwrap();
        assert_eq!(t.shape, vec![1]);
        assert_eq!(t.values, vec![0.0]);
    }

    #[test]
    fn dims_are_little_endian() {
        let bytes = encode(&[2, 3], &[0.0; 6]).unwrap();
        assert_eq!(bytes[6], 2);
        assert_eq!(&bytes[7..15], &[2, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(bytes.len(), 15 + 24);
    }

    #[test]
    fn rejects_malformed() {
        let good = encode(&[2], &[1.0, 2.0]).unwrap();

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::Format(_))));

        let mut bad = good.clone();
        bad[4] = 2;
        assert!(matches!(decode(&bad), Err(Error::Format(_))));

        let mut bad = good.clone();
        bad[5] = 2;
        assert!(matches!(decode(&bad), Err(Error::Format(_))));

        let mut bad = good.clone();
        bad[6] = 5;
        assert!(matches!(decode(&bad), Err(Error::Format(_))));

        assert!(matches!(
            decode(&good[..good.len() - 1]),
            Err(Error::Format(_))
        ));
        assert!(matches!(decode(&good[..5]), Err(Error::Format(_))));

        let mut bad = good.clone();
        bad.push(0);
        assert!(matches!(decode(&bad), Err(Error::Format(_))));
    }

    #[test]
    fn encode_validates_shape() {
        assert!(encode(&[2, 2], &[0.0; 3]).is_err());
        assert!(encode(&[], &[]).is_err());
        assert!(encode(&[1, 1, 1, 1, 1], &[0.0]).is_err());
    }

    #[test]
    fn file_io() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ragt");
        write_tensor(&path, &[3], &[1.5, -2.0, 0.25]).unwrap();
        let t = read_tensor(&path).unwrap();
        assert_eq!(t, Tensor::new(vec![3], vec![1.5, -2.0, 0.25]).unwrap());
        assert!(matches!(
            read_tensor(dir.path().join("nope.ragt")),
            Err(Error::Io { .. })
        ));
    }

    proptest! {
        #[test]
        fn round_trip_is_bitwise(
            shape in proptest::collection::vec(1usize..5, 1..=4),
            seed in any::<u64>(),
        ) {
            let n: usize = shape.iter().product();
            // arbitrary bit patterns, NaN payloads included
            let values: Vec<f32> = (0..n)
                .map(|i| f32::from_bits((seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)) as u32))
                .collect();
            let bytes = encode(&shape, &values).unwrap();
            let t = decode(&bytes).unwrap();
            prop_assert_eq!(&t.shape, &shape);
            let a: Vec<u32> = t.values.iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = values.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
            prop_assert_eq!(encode(&t.shape, &t.values).unwrap(), bytes);
        }
    }
}
