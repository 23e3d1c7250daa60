//! Align-corners resampling: output index `i` samples source coordinate `i * (S - 1) / (T - 1)`,
//! and a target extent of 1 samples coordinate 0.

use rayon::prelude::*;

use super::{CtVolume, OrganMask, VolumeMeta};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn check_target(target: [usize; 3]) -> Result<()> {
    if target.contains(&0) {
        return Err(Error::InvalidShape {
            shape: target.to_vec(),
            reason: "resample target extents must be at least 1".into(),
        });
    }
    Ok(())
}

/// Lower source index and interpolation weight for each output index along one axis.
fn linear_taps(source: usize, target: usize) -> Vec<(usize, usize, f64)> {
    (0..target)
        .map(|i| {
            if target == 1 || source == 1 {
                return (0, 0, 0.0);
            }
            let coord = (i * (source - 1)) as f64 / (target - 1) as f64;
            let lo = (coord.floor() as usize).min(source - 1);
            let hi = (lo + 1).min(source - 1);
            (lo, hi, coord - lo as f64)
        })
        .collect()
}

/// Nearest source index; exact rational arithmetic, ties go to the lower index.
fn nearest_taps(source: usize, target: usize) -> Vec<usize> {
    (0..target)
        .map(|i| {
            if target == 1 {
                return 0;
            }
            let num = i * (source - 1);
            let den = target - 1;
            let (q, rem) = (num / den, num % den);
            if 2 * rem > den {
                q + 1
            } else {
                q
            }
        })
        .collect()
}

fn rescaled_meta(meta: &VolumeMeta, source: [usize; 3], target: [usize; 3]) -> VolumeMeta {
    let mut out = meta.clone();
    for axis in 0..3 {
        out.spacing_mm[axis] = meta.spacing_mm[axis] * source[axis] as f64 / target[axis] as f64;
    }
    out
}

/// Trilinear resampling to `target` (D, H, W).
pub fn resample_trilinear(v: &CtVolume, target: [usize; 3]) -> Result<CtVolume> {
    check_target(target)?;
    let source = v.dims();
    let [sd, sh, sw] = source;
    let [td, th, tw] = target;
    let (tz, ty, tx) = (
        linear_taps(sd, td),
        linear_taps(sh, th),
        linear_taps(sw, tw),
    );
    let src = v.tensor().data();
    let at = |z: usize, y: usize, x: usize| f64::from(src[(z * sh + y) * sw + x]);
    let lerp = |a: f64, b: f64, t: f64| a + t * (b - a);

    let mut out = vec![0.0f32; td * th * tw];
    out.par_chunks_mut(th * tw)
        .zip(tz.par_iter())
        .for_each(|(plane, &(z0, z1, fz))| {
            for (yi, &(y0, y1, fy)) in ty.iter().enumerate() {
                let row = &mut plane[yi * tw..(yi + 1) * tw];
                for (o, &(x0, x1, fx)) in row.iter_mut().zip(&tx) {
                    let c00 = lerp(at(z0, y0, x0), at(z0, y0, x1), fx);
                    let c01 = lerp(at(z0, y1, x0), at(z0, y1, x1), fx);
                    let c10 = lerp(at(z1, y0, x0), at(z1, y0, x1), fx);
                    let c11 = lerp(at(z1, y1, x0), at(z1, y1, x1), fx);
                    let c0 = lerp(c00, c01, fy);
                    let c1 = lerp(c10, c11, fy);
                    *o = lerp(c0, c1, fz) as f32;
                }
            }
        });
    CtVolume::new(
        Tensor::from_vec(&target, out)?,
        rescaled_meta(&v.meta, source, target),
    )
}

/// Nearest-neighbour mask resampling on the same grid as [`resample_trilinear`].
pub fn resample_mask_nearest(m: &OrganMask, target: [usize; 3]) -> Result<OrganMask> {
    check_target(target)?;
    let [sd, sh, sw] = m.dims();
    let [td, th, tw] = target;
    let (nz, ny, nx) = (
        nearest_taps(sd, td),
        nearest_taps(sh, th),
        nearest_taps(sw, tw),
    );
    let mut labels = Vec::with_capacity(td * th * tw);
    for &z in &nz {
        for &y in &ny {
            for &x in &nx {
                labels.push(m.label(z, y, x));
            }
        }
    }
    OrganMask::new(target, labels)
}
