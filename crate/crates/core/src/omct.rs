//! OMCT tensor container.
//!
//! Layout:
//!
//! ```text
//! 0..8        ASCII magic "OMCT0001"
//! 8..12       u32 LE header length H
//! 12..12+H    UTF-8 JSON {"dtype":"f32","order":"C","shape":[...]}
//! 12+H..      f32 LE payload, exactly product(shape) elements
//! ```

use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"OMCT0001";

#[derive(Deserialize)]
struct Header {
    dtype: String,
    order: String,
    shape: Vec<usize>,
}

fn header_json(shape: &[usize]) -> String {
    let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
    format!(
        "{{\"dtype\":\"f32\",\"order\":\"C\",\"shape\":[{}]}}",
        dims.join(",")
    )
}

pub fn encode(t: &Tensor) -> Vec<u8> {
    let header = header_json(t.shape());
    let mut out = Vec::with_capacity(12 + header.len() + 4 * t.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(Error::Format("missing OMCT0001 magic".into()));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload_start = 12usize
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| Error::Format("truncated header".into()))?;
    let header: Header = serde_json::from_slice(&bytes[12..payload_start])
        .map_err(|e| Error::Format(format!("bad header json: {e}")))?;
    if header.dtype != "f32" || header.order != "C" {
        return Err(Error::Format(format!(
            "unsupported dtype/order {}/{}",
            header.dtype, header.order
        )));
    }
    let count = header
        .shape
        .iter()
        .try_fold(1usize, |acc, &e| acc.checked_mul(e))
        .ok_or_else(|| Error::Format("shape overflows".into()))?;
    let payload = &bytes[payload_start..];
    if payload.len() != count * 4 {
        return Err(Error::Format(format!(
            "shape {:?} needs {} payload bytes, found {}",
            header.shape,
            count * 4,
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor::from_vec(&header.shape, data).map_err(|e| Error::Format(e.to_string()))
}

pub fn write(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(t)).map_err(|e| Error::io(path, e))
}

pub fn read(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prng::Prng;

    #[test]
    fn header_is_byte_exact() {
        let t = Tensor::new(&[2, 3], 1.0).unwrap();
        let bytes = encode(&t);
        let expected = br#"{"dtype":"f32","order":"C","shape":[2,3]}"#;
        assert_eq!(&bytes[..8], b"OMCT0001");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize, expected.len());
        assert_eq!(&bytes[12..12 + expected.len()], expected);
        assert_eq!(bytes.len(), 12 + expected.len() + 24);
        assert_eq!(&bytes[12 + expected.len()..16 + expected.len()], &1.0f32.to_le_bytes());
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode(&Tensor::new(&[1], 0.0).unwrap());
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(Error::Format(_))));
        assert!(decode(b"OMCT").is_err());
    }

    #[test]
    fn short_payload() {
        let header = br#"{"dtype":"f32","order":"C","shape":[2,2]}"#;
        let mut bytes = MAGIC.to_vec();
        bytes.extend_from_slice(&(header.len() as u32).to_le_bytes());
        bytes.extend_from_slice(header);
        for v in [1.0f32, 2.0, 3.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        assert!(matches!(decode(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn round_trip_random_tensors() {
        let mut rng = Prng::new(77);
        for _ in 0..1000 {
            let ndim = 1 + rng.next_below(4) as usize;
            let shape: Vec<usize> = (0..ndim).map(|_| 1 + rng.next_below(5) as usize).collect();
            let n: usize = shape.iter().product();
            // raw bit patterns, so NaNs, infinities and signed zeros are covered too
            let data = (0..n).map(|_| f32::from_bits(rng.next_u64() as u32)).collect();
            let t = Tensor::from_vec(&shape, data).unwrap();
            assert!(decode(&encode(&t)).unwrap().bit_eq(&t));
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.omct");
        let t = Tensor::from_vec(&[3], vec![-0.0, 1.25, f32::MAX]).unwrap();
        write(&t, &path).unwrap();
        assert!(read(&path).unwrap().bit_eq(&t));
        assert!(matches!(read(dir.path().join("missing.omct")), Err(Error::Io { .. })));
    }
}
