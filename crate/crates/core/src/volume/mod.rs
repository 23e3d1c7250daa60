//! CT volumes, organ label masks, and their preprocessing.

mod nifti;
mod resample;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::omct;
use crate::tensor::Tensor;

pub use nifti::{load_nifti, parse_nifti};
pub use resample::{resample_mask_nearest, resample_trilinear};

/// Largest label id a mask may carry; 0 is background.
pub const MAX_LABEL: u8 = 117;

pub const DEFAULT_WINDOW: (f32, f32) = (-1000.0, 1000.0);
pub const DEFAULT_TARGET: [usize; 3] = [32, 384, 384];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceFormat {
    Nifti,
    Raw,
    Synthetic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeMeta {
    /// Voxel spacing in millimetres, `(dz, dy, dx)`.
    pub spacing_mm: [f64; 3],
    pub source: SourceFormat,
    /// Set when the input carried no usable spacing and 1 mm isotropic was assumed.
    pub spacing_defaulted: bool,
}

impl VolumeMeta {
    pub fn new(spacing_mm: [f64; 3], source: SourceFormat) -> Result<Self> {
        if spacing_mm.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Validation(format!(
                "spacing must be positive, got {spacing_mm:?}"
            )));
        }
        Ok(Self {
            spacing_mm,
            source,
            spacing_defaulted: false,
        })
    }

    pub fn unit_spacing(source: SourceFormat) -> Self {
        Self {
            spacing_mm: [1.0; 3],
            source,
            spacing_defaulted: true,
        }
    }
}

/// Intensity volume of shape `D x H x W` (z, y, x).
#[derive(Clone, Debug, PartialEq)]
pub struct CtVolume {
    data: Tensor,
    pub meta: VolumeMeta,
}

impl CtVolume {
    pub fn new(data: Tensor, meta: VolumeMeta) -> Result<Self> {
        if data.ndim() != 3 {
            return Err(Error::InvalidShape {
                shape: data.shape().to_vec(),
                reason: "a CT volume must have exactly 3 dims".into(),
            });
        }
        Ok(Self { data, meta })
    }

    pub fn dims(&self) -> [usize; 3] {
        let s = self.data.shape();
        [s[0], s[1], s[2]]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    pub fn into_tensor(self) -> Tensor {
        self.data
    }

    pub fn voxel(&self, z: usize, y: usize, x: usize) -> f32 {
        let [_, h, w] = self.dims();
        self.data.data()[(z * h + y) * w + x]
    }
}

/// Co-registered label volume, labels in `0..=117`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrganMask {
    dims: [usize; 3],
    labels: Vec<u8>,
}

impl OrganMask {
    pub fn new(dims: [usize; 3], labels: Vec<u8>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidShape {
                shape: dims.to_vec(),
                reason: "mask extents must be at least 1".into(),
            });
        }
        if labels.len() != dims.iter().product::<usize>() {
            return Err(Error::ShapeMismatch(format!(
                "mask dims {dims:?} do not match {} labels",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l > MAX_LABEL) {
            return Err(Error::Validation(format!(
                "mask label {bad} exceeds {MAX_LABEL}"
            )));
        }
        Ok(Self { dims, labels })
    }

    /// Mask from an OMCT tensor whose entries must be integers in `0..=117`.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        if t.ndim() != 3 {
            return Err(Error::Validation(format!(
                "mask must be 3-D, got shape {:?}",
                t.shape()
            )));
        }
        let labels = t
            .data()
            .iter()
            .map(|&v| {
                if v.fract() != 0.0 || !(0.0..=f32::from(MAX_LABEL)).contains(&v) {
                    Err(Error::Validation(format!(
                        "mask value {v} is not an integer label in 0..={MAX_LABEL}"
                    )))
                } else {
                    Ok(v as u8)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let s = t.shape();
        Self::new([s[0], s[1], s[2]], labels)
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(
            &self.dims,
            self.labels.iter().map(|&l| f32::from(l)).collect(),
        )
        .expect("mask dims are validated at construction")
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label(&self, z: usize, y: usize, x: usize) -> u8 {
        let [_, h, w] = self.dims;
        self.labels[(z * h + y) * w + x]
    }
}

/// Load an OMCT volume and optional OMCT mask.
pub fn load_raw(
    volume_path: impl AsRef<Path>,
    mask_path: Option<&Path>,
) -> Result<(CtVolume, Option<OrganMask>)> {
    let t = omct::read(volume_path)?;
    if t.ndim() != 3 {
        return Err(Error::Validation(format!(
            "volume must be 3-D, got shape {:?}",
            t.shape()
        )));
    }
    let volume = CtVolume::new(t, VolumeMeta::unit_spacing(SourceFormat::Raw))?;
    let mask = match mask_path {
        None => None,
        Some(p) => {
            let mask = OrganMask::from_tensor(&omct::read(p)?)?;
            if mask.dims() != volume.dims() {
                return Err(Error::Validation(format!(
                    "mask dims {:?} differ from volume dims {:?}",
                    mask.dims(),
                    volume.dims()
                )));
            }
            Some(mask)
        }
    };
    Ok((volume, mask))
}

/// Clamp HU to `[lo, hi]` and map linearly onto `[0, 1]`.
pub fn window_and_normalize(v: &CtVolume, lo: f32, hi: f32) -> Result<CtVolume> {
    if !(lo < hi) {
        return Err(Error::InvalidRange {
            lo: f64::from(lo),
            hi: f64::from(hi),
        });
    }
    let (lo, hi) = (f64::from(lo), f64::from(hi));
    let span = hi - lo;
    let data = v
        .data
        .data()
        .iter()
        .map(|&x| ((f64::from(x) - lo) / span).clamp(0.0, 1.0) as f32)
        .collect();
    Ok(CtVolume {
        data: Tensor::from_vec(v.data.shape(), data)?,
        meta: v.meta.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn volume(values: &[f32]) -> CtVolume {
        CtVolume::new(
            Tensor::from_vec(&[1, 1, values.len()], values.to_vec()).unwrap(),
            VolumeMeta::unit_spacing(SourceFormat::Synthetic),
        )
        .unwrap()
    }

    #[test]
    fn window_reference_points() {
        let v = volume(&[-1000.0, 1000.0, 0.0, 2000.0, -500.0, -3000.0]);
        let out = window_and_normalize(&v, -1000.0, 1000.0).unwrap();
        assert_eq!(out.tensor().data(), &[0.0, 1.0, 0.5, 1.0, 0.25, 0.0]);
    }

    #[test]
    fn window_rejects_empty_range() {
        let v = volume(&[0.0]);
        assert!(matches!(
            window_and_normalize(&v, 10.0, 10.0),
            Err(Error::InvalidRange { .. })
        ));
    }

    #[test]
    fn window_is_monotone() {
        let xs: Vec<f32> = (-60..=60).map(|i| i as f32 * 37.5).collect();
        let out = window_and_normalize(&volume(&xs), -1000.0, 1000.0).unwrap();
        assert!(out.tensor().data().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn mask_rejects_out_of_range_and_fractional() {
        let t = Tensor::from_vec(&[1, 1, 2], vec![3.0, 118.0]).unwrap();
        assert!(matches!(OrganMask::from_tensor(&t), Err(Error::Validation(_))));
        let t = Tensor::from_vec(&[1, 1, 2], vec![3.0, 2.5]).unwrap();
        assert!(OrganMask::from_tensor(&t).is_err());
        let t = Tensor::from_vec(&[1, 1, 2], vec![-1.0, 2.0]).unwrap();
        assert!(OrganMask::from_tensor(&t).is_err());
    }

    #[test]
    fn load_raw_pairs() {
        let dir = tempfile::tempdir().unwrap();
        let vp = dir.path().join("v.omct");
        let mp = dir.path().join("m.omct");
        omct::write(&Tensor::new(&[4, 8, 8], 10.0).unwrap(), &vp).unwrap();
        omct::write(&Tensor::new(&[4, 8, 8], 5.0).unwrap(), &mp).unwrap();
        let (v, m) = load_raw(&vp, Some(&mp)).unwrap();
        assert_eq!(v.dims(), [4, 8, 8]);
        assert!(v.meta.spacing_defaulted);
        assert_eq!(m.unwrap().label(3, 7, 7), 5);

        omct::write(&Tensor::new(&[4, 8, 8], 118.0).unwrap(), &mp).unwrap();
        assert!(matches!(load_raw(&vp, Some(&mp)), Err(Error::Validation(_))));

        omct::write(&Tensor::new(&[4, 8, 9], 1.0).unwrap(), &mp).unwrap();
        assert!(matches!(load_raw(&vp, Some(&mp)), Err(Error::Validation(_))));
    }
}
