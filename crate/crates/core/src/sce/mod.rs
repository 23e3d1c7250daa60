//! Spatial consistency enhancement: slice composition, patch encoding, tri-axial positional
//! embedding, token unshuffle and the modality-routed hybrid projection.
//!
//! ```text
//! volume D x H x W ──compose_units──▶ N_s x 3 x H x W
//! slices n x H x W ──replicate_slices─┘
//!   ──encode_patches──▶ N_s x H' x W' x d_v                     (H' = H / K)
//!   ──apply_tpe───────▶ N_s x H' x W' x (d_v + d_z + d_y + d_x)
//!   ──unshuffle(m)────▶ N_s x H'/m x W'/m x (...) * m^2
//!   ──mhp_project─────▶ L x d_f                                 (L = N_s * H'/m * W'/m)
//! ```

mod encoder;
mod mhp;
mod tpe;
mod unshuffle;
mod vsc;

use crate::config::Modality;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use encoder::PatchEncoder;
pub use mhp::{mhp_project, Mhp, MhpCache, MhpParams};
pub use tpe::{apply_tpe, build_tpe, sinusoid_table, TpeTables};
pub use unshuffle::{reshuffle, unshuffle};
pub use vsc::{compose_units, replicate_slices, UnitStack};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Encoded,
    Positioned,
    Unshuffled,
}

/// Token features laid out `N_s x H' x W' x d`.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenGrid {
    data: Tensor,
    stage: Stage,
    modality: Modality,
}

impl TokenGrid {
    pub fn new(data: Tensor, stage: Stage, modality: Modality) -> Result<Self> {
        if data.ndim() != 4 {
            return Err(Error::ShapeMismatch(format!(
                "token grid must be 4-D, got {:?}",
                data.shape()
            )));
        }
        Ok(Self {
            data,
            stage,
            modality,
        })
    }

    /// `(N_s, rows, cols, feature dim)`.
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        let s = self.data.shape();
        (s[0], s[1], s[2], s[3])
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn token_count(&self) -> usize {
        let (n, h, w, _) = self.dims();
        n * h * w
    }

    /// Feature vector of token `(unit, row, col)`.
    pub fn token(&self, unit: usize, row: usize, col: usize) -> &[f32] {
        let (_, h, w, d) = self.dims();
        let start = ((unit * h + row) * w + col) * d;
        &self.data.data()[start..start + d]
    }

    /// Flatten to `L x d` in (unit, row, col) scan order.
    pub fn flatten(&self) -> Tensor {
        let (_, _, _, d) = self.dims();
        self.data
            .clone()
            .reshape(&[self.token_count(), d])
            .expect("same element count")
    }
}

/// Scan index of token `(unit, row, col)` on a grid with `rows x cols` tokens per unit.
pub fn scan_index(unit: usize, row: usize, col: usize, rows: usize, cols: usize) -> usize {
    unit * rows * cols + row * cols + col
}
