use rayon::prelude::*;

use super::{Stage, TokenGrid, UnitStack};
use crate::error::{Error, Result};
use crate::init::xavier_uniform;
use crate::prng::Prng;
use crate::tensor::Tensor;

/// Frozen linear patch encoder: each `3 x K x K` patch is flattened channel-major, then
/// row-major, and mapped to `d_v` features.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchEncoder {
    patch: usize,
    weight: Tensor,
    bias: Tensor,
}

impl PatchEncoder {
    pub fn init(patch: usize, dim: usize, rng: &mut Prng) -> Result<Self> {
        if patch == 0 || dim == 0 {
            return Err(Error::Config("patch size and token dim must be at least 1".into()));
        }
        let fan_in = 3 * patch * patch;
        Ok(Self {
            patch,
            weight: xavier_uniform(dim, fan_in, rng)?,
            bias: Tensor::zeros(&[dim])?,
        })
    }

    pub fn from_tensors(patch: usize, weight: Tensor, bias: Tensor) -> Result<Self> {
        let fan_in = 3 * patch * patch;
        if patch == 0
            || weight.ndim() != 2
            || weight.shape()[1] != fan_in
            || bias.shape() != [weight.shape()[0]]
        {
            return Err(Error::ShapeMismatch(format!(
                "encoder weight {:?} / bias {:?} inconsistent with patch size {patch}",
                weight.shape(),
                bias.shape()
            )));
        }
        Ok(Self {
            patch,
            weight,
            bias,
        })
    }

    pub fn patch(&self) -> usize {
        self.patch
    }

    pub fn dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    pub fn encode(&self, units: &UnitStack) -> Result<TokenGrid> {
        let k = self.patch;
        let (n_s, h, w) = units.dims();
        for extent in [h, w] {
            if extent % k != 0 {
                return Err(Error::IndivisiblePatch { patch: k, extent });
            }
        }
        let (rows, cols, dim) = (h / k, w / k, self.dim());
        let fan_in = 3 * k * k;
        let weight: Vec<f64> = self.weight.to_f64();
        let bias: Vec<f64> = self.bias.to_f64();
        let src = units.tensor().data();

        let mut out = vec![0.0f32; n_s * rows * cols * dim];
        out.par_chunks_mut(rows * cols * dim)
            .enumerate()
            .for_each(|(unit, unit_out)| {
                let mut patch = vec![0.0f64; fan_in];
                for r in 0..rows {
                    for c in 0..cols {
                        for ch in 0..3 {
                            let plane = (unit * 3 + ch) * h * w;
                            for ky in 0..k {
                                let row_start = plane + (r * k + ky) * w + c * k;
                                for kx in 0..k {
                                    patch[(ch * k + ky) * k + kx] = f64::from(src[row_start + kx]);
                                }
                            }
                        }
                        let token = &mut unit_out[(r * cols + c) * dim..(r * cols + c + 1) * dim];
                        for (o, (wrow, b)) in token
                            .iter_mut()
                            .zip(weight.chunks_exact(fan_in).zip(&bias))
                        {
                            *o = (b + crate::linalg::dot(wrow, &patch)) as f32;
                        }
                    }
                }
            });
        TokenGrid::new(
            Tensor::from_vec(&[n_s, rows, cols, dim], out)?,
            Stage::Encoded,
            units.modality(),
        )
    }
}
