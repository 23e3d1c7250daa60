use crate::config::Modality;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::volume::CtVolume;

/// Three-channel units, `N_s x 3 x H x W`.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitStack {
    units: Tensor,
    modality: Modality,
}

impl UnitStack {
    pub fn new(units: Tensor, modality: Modality) -> Result<Self> {
        if units.ndim() != 4 || units.shape()[1] != 3 {
            return Err(Error::ShapeMismatch(format!(
                "unit stack must be N_s x 3 x H x W, got {:?}",
                units.shape()
            )));
        }
        Ok(Self { units, modality })
    }

    pub fn tensor(&self) -> &Tensor {
        &self.units
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    /// `(N_s, H, W)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        let s = self.units.shape();
        (s[0], s[2], s[3])
    }

    pub fn channel(&self, unit: usize, channel: usize) -> &[f32] {
        let (_, h, w) = self.dims();
        let start = (unit * 3 + channel) * h * w;
        &self.units.data()[start..start + h * w]
    }
}

/// Group every three consecutive axial slices into one unit; the trailing `D mod 3` slices are dropped.
pub fn compose_units(v: &CtVolume) -> Result<UnitStack> {
    let [d, h, w] = v.dims();
    if d < 3 {
        return Err(Error::TooFewSlices(d));
    }
    let n_s = d / 3;
    // slices 3i, 3i+1, 3i+2 are already contiguous in z-major order
    let data = v.tensor().data()[..n_s * 3 * h * w].to_vec();
    UnitStack::new(Tensor::from_vec(&[n_s, 3, h, w], data)?, Modality::Volume)
}

/// Copy each independent slice into all three channels.
pub fn replicate_slices(slices: &Tensor) -> Result<UnitStack> {
    if slices.ndim() != 3 {
        return Err(Error::ShapeMismatch(format!(
            "slices must be n x H x W, got {:?}",
            slices.shape()
        )));
    }
    let s = slices.shape();
    let (n, plane) = (s[0], s[1] * s[2]);
    let mut data = Vec::with_capacity(n * 3 * plane);
    for slice in slices.data().chunks_exact(plane) {
        for _ in 0..3 {
            data.extend_from_slice(slice);
        }
    }
    UnitStack::new(Tensor::from_vec(&[n, 3, s[1], s[2]], data)?, Modality::Slice)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{SourceFormat, VolumeMeta};

    fn ramp_volume(d: usize, h: usize, w: usize) -> CtVolume {
        let data = (0..d * h * w).map(|i| i as f32).collect();
        CtVolume::new(
            Tensor::from_vec(&[d, h, w], data).unwrap(),
            VolumeMeta::unit_spacing(SourceFormat::Synthetic),
        )
        .unwrap()
    }

    #[test]
    fn thirty_two_slices_make_ten_units() {
        let v = ramp_volume(32, 2, 2);
        let u = compose_units(&v).unwrap();
        assert_eq!(u.dims(), (10, 2, 2));
        assert_eq!(u.modality(), Modality::Volume);
        // last unit holds slices 27, 28, 29 (0-based); 30 and 31 are dropped
        assert_eq!(u.channel(9, 2), &[116.0, 117.0, 118.0, 119.0]);
    }

    #[test]
    fn three_slices_keep_order() {
        let v = ramp_volume(3, 1, 2);
        let u = compose_units(&v).unwrap();
        assert_eq!(u.dims(), (1, 1, 2));
        assert_eq!(u.channel(0, 0), &[0.0, 1.0]);
        assert_eq!(u.channel(0, 1), &[2.0, 3.0]);
        assert_eq!(u.channel(0, 2), &[4.0, 5.0]);
    }

    #[test]
    fn two_slices_rejected() {
        assert!(matches!(
            compose_units(&ramp_volume(2, 4, 4)),
            Err(Error::TooFewSlices(2))
        ));
    }

    #[test]
    fn replicated_channels_identical() {
        let slices = Tensor::from_vec(&[5, 2, 2], (0..20).map(|i| i as f32 * 0.1).collect()).unwrap();
        let u = replicate_slices(&slices).unwrap();
        assert_eq!(u.dims(), (5, 2, 2));
        assert_eq!(u.modality(), Modality::Slice);
        for i in 0..5 {
            assert_eq!(u.channel(i, 0), u.channel(i, 1));
            assert_eq!(u.channel(i, 1), u.channel(i, 2));
            assert_eq!(u.channel(i, 0), &slices.data()[i * 4..i * 4 + 4]);
        }
    }
}
