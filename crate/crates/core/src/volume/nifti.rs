//! Single-file, uncompressed NIfTI-1 reader (int16 and float32 only).

use std::fs;
use std::path::Path;

use super::{CtVolume, SourceFormat, VolumeMeta};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const HEADER_SIZE: usize = 348;
const DT_INT16: i16 = 4;
const DT_FLOAT32: i16 = 16;

#[derive(Clone, Copy)]
enum Endian {
    Little,
    Big,
}

struct Reader<'a> {
    bytes: &'a [u8],
    endian: Endian,
}

impl Reader<'_> {
    fn raw4(&self, at: usize) -> [u8; 4] {
        self.bytes[at..at + 4].try_into().unwrap()
    }

    fn i16(&self, at: usize) -> i16 {
        let b = [self.bytes[at], self.bytes[at + 1]];
        match self.endian {
            Endian::Little => i16::from_le_bytes(b),
            Endian::Big => i16::from_be_bytes(b),
        }
    }

    fn f32(&self, at: usize) -> f32 {
        match self.endian {
            Endian::Little => f32::from_le_bytes(self.raw4(at)),
            Endian::Big => f32::from_be_bytes(self.raw4(at)),
        }
    }
}

pub fn load_nifti(path: impl AsRef<Path>) -> Result<(CtVolume, VolumeMeta)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_nifti(&bytes)
}

/// Decode a `.nii` byte image into a `D x H x W` volume.
pub fn parse_nifti(bytes: &[u8]) -> Result<(CtVolume, VolumeMeta)> {
    if bytes.len() < HEADER_SIZE {
        return Err(Error::Format(format!(
            "NIfTI header needs {HEADER_SIZE} bytes, file has {}",
            bytes.len()
        )));
    }
    let sizeof_hdr = bytes[0..4].try_into().unwrap();
    let endian = if i32::from_le_bytes(sizeof_hdr) == HEADER_SIZE as i32 {
        Endian::Little
    } else if i32::from_be_bytes(sizeof_hdr) == HEADER_SIZE as i32 {
        Endian::Big
    } else {
        return Err(Error::Format("sizeof_hdr is not 348".into()));
    };
    if &bytes[344..348] != b"n+1\0" {
        return Err(Error::Format(
            "magic is not \"n+1\\0\"; only single-file NIfTI-1 is supported".into(),
        ));
    }
    let r = Reader { bytes, endian };

    let ndim = r.i16(40);
    if ndim != 3 {
        return Err(Error::Format(format!("dim[0] must be 3, got {ndim}")));
    }
    let mut extents = [0usize; 3];
    for (axis, e) in extents.iter_mut().enumerate() {
        let d = r.i16(42 + 2 * axis);
        if d < 1 {
            return Err(Error::Format(format!("dim[{}] = {d} is not positive", axis + 1)));
        }
        *e = d as usize;
    }
    let [nx, ny, nz] = extents;

    let datatype = r.i16(70);
    let elem = match datatype {
        DT_INT16 => 2,
        DT_FLOAT32 => 4,
        other => {
            return Err(Error::Format(format!(
                "unsupported datatype code {other}; expected int16 (4) or float32 (16)"
            )))
        }
    };

    let pixdim = [r.f32(80), r.f32(84), r.f32(88)];
    let vox_offset = r.f32(108);
    let mut slope = r.f32(112);
    let inter = r.f32(116);
    if slope == 0.0 || !slope.is_finite() {
        slope = 1.0;
    }
    let inter = if inter.is_finite() { inter } else { 0.0 };

    if !(vox_offset.is_finite() && vox_offset >= HEADER_SIZE as f32) {
        return Err(Error::Format(format!("vox_offset {vox_offset} is invalid")));
    }
    let start = vox_offset as usize;
    let count = nx * ny * nz;
    let end = start + count * elem;
    if bytes.len() < end {
        return Err(Error::Format(format!(
            "payload needs {} bytes from offset {start}, file has {}",
            count * elem,
            bytes.len().saturating_sub(start)
        )));
    }

    // NIfTI stores x fastest, then y, then z: the same flat order as a row-major [z][y][x] array.
    let payload = &bytes[start..end];
    let data: Vec<f32> = match datatype {
        DT_INT16 => payload
            .chunks_exact(2)
            .map(|c| {
                let raw = match endian {
                    Endian::Little => i16::from_le_bytes([c[0], c[1]]),
                    Endian::Big => i16::from_be_bytes([c[0], c[1]]),
                };
                f32::from(raw) * slope + inter
            })
            .collect(),
        _ => payload
            .chunks_exact(4)
            .map(|c| {
                let b = [c[0], c[1], c[2], c[3]];
                let raw = match endian {
                    Endian::Little => f32::from_le_bytes(b),
                    Endian::Big => f32::from_be_bytes(b),
                };
                raw * slope + inter
            })
            .collect(),
    };

    let meta = if pixdim.iter().all(|p| p.is_finite() && *p > 0.0) {
        VolumeMeta::new(
            [f64::from(pixdim[2]), f64::from(pixdim[1]), f64::from(pixdim[0])],
            SourceFormat::Nifti,
        )?
    } else {
        VolumeMeta::unit_spacing(SourceFormat::Nifti)
    };
    let volume = CtVolume::new(Tensor::from_vec(&[nz, ny, nx], data)?, meta.clone())?;
    Ok((volume, meta))
}
