//! Organ-level semantic enhancement.
//!
//! The organ mask is projected onto the unshuffled token grid (a token is on when any organ
//! voxel falls in its receptive field), the flagged tokens are pooled to a fixed length `L_c`,
//! and the pooled tokens are appended after the global tokens.

use serde::{Deserialize, Serialize};

use crate::config::Modality;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::tensor::Tensor;
use crate::volume::{OrganMask, MAX_LABEL};

/// Maps voxels to tokens: a token covers `slices_per_unit` slices and `K*m x K*m` pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenGeometry {
    pub patch: usize,
    pub m: usize,
    pub n_s: usize,
    /// 3 for composed volumes, 1 for replicated slices.
    pub slices_per_unit: usize,
}

impl TokenGeometry {
    pub fn new(patch: usize, m: usize, n_s: usize, modality: Modality) -> Self {
        Self {
            patch,
            m,
            n_s,
            slices_per_unit: match modality {
                Modality::Slice => 1,
                Modality::Volume => 3,
            },
        }
    }

    /// Pixels per token side.
    pub fn stride(&self) -> usize {
        self.patch * self.m
    }
}

/// Per-token organ flags over the unshuffled grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenMask {
    dims: [usize; 3],
    flags: Vec<bool>,
}

impl TokenMask {
    pub fn new(dims: [usize; 3], flags: Vec<bool>) -> Result<Self> {
        if flags.len() != dims.iter().product::<usize>() {
            return Err(Error::ShapeMismatch(format!(
                "{} flags for a {dims:?} grid",
                flags.len()
            )));
        }
        Ok(Self { dims, flags })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn get(&self, unit: usize, row: usize, col: usize) -> bool {
        let [_, h, w] = self.dims;
        self.flags[(unit * h + row) * w + col]
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    /// Scan indices of the flagged tokens, ascending.
    pub fn selected(&self) -> Vec<usize> {
        self.flags
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| f.then_some(i))
            .collect()
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(
            &self.dims,
            self.flags.iter().map(|&f| if f { 1.0 } else { 0.0 }).collect(),
        )
        .expect("grid dims are non-zero")
    }
}

pub fn project_mask_to_tokens(
    mask: &OrganMask,
    organ: u8,
    geom: &TokenGeometry,
) -> Result<TokenMask> {
    if organ == 0 || organ > MAX_LABEL {
        return Err(Error::Validation(format!(
            "organ label must be in 1..={MAX_LABEL}, got {organ}"
        )));
    }
    let [d, h, w] = mask.dims();
    let stride = geom.stride();
    let depth = geom.slices_per_unit * geom.n_s;
    if stride == 0 || geom.n_s == 0 || d < depth || h % stride != 0 || w % stride != 0 {
        return Err(Error::ShapeMismatch(format!(
            "mask {:?} is inconsistent with {} units of {} slices and {stride}-pixel tokens",
            mask.dims(),
            geom.n_s,
            geom.slices_per_unit
        )));
    }
    let (rows, cols) = (h / stride, w / stride);
    let mut flags = vec![false; geom.n_s * rows * cols];
    // voxels in dropped trailing slices (z >= depth) never contribute
    for z in 0..depth {
        let unit = z / geom.slices_per_unit;
        for y in 0..h {
            let plane_row = &mask.labels()[(z * h + y) * w..(z * h + y + 1) * w];
            let token_row = (unit * rows + y / stride) * cols;
            for (x, &label) in plane_row.iter().enumerate() {
                if label == organ {
                    flags[token_row + x / stride] = true;
                }
            }
        }
    }
    TokenMask::new([geom.n_s, rows, cols], flags)
}

/// Organ tokens `L_o x d`; `L_o` may be zero.
#[derive(Clone, Debug, PartialEq)]
pub struct OrganTokens {
    dim: usize,
    data: Vec<f32>,
}

impl OrganTokens {
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn token(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn from_rows(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::ShapeMismatch(format!(
                "{} values do not form rows of width {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }
}

pub fn select_tokens(flat: &Tensor, tm: &TokenMask) -> Result<OrganTokens> {
    if flat.ndim() != 2 || flat.shape()[0] != tm.flags.len() {
        return Err(Error::ShapeMismatch(format!(
            "token matrix {:?} does not match a grid of {} tokens",
            flat.shape(),
            tm.flags.len()
        )));
    }
    let d = flat.shape()[1];
    let mut data = Vec::with_capacity(tm.count() * d);
    for i in tm.selected() {
        data.extend_from_slice(&flat.data()[i * d..(i + 1) * d]);
    }
    OrganTokens::from_rows(d, data)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggConfig {
    pub l_c_slice: usize,
    pub l_c_volume: usize,
}

impl Default for AggConfig {
    fn default() -> Self {
        Self {
            l_c_slice: 81,
            l_c_volume: 90,
        }
    }
}

/// Fixed-length pooling as a sparse linear map from `L_o` rows to `L_c` rows.
///
/// With `L_o >= L_c`, output `j` averages the contiguous bin
/// `[floor(j L_o / L_c), floor((j+1) L_o / L_c))`; with `1 <= L_o < L_c`, output `j` repeats
/// token `floor(j L_o / L_c)`; with `L_o = 0` every output is zero.
#[derive(Clone, Debug, PartialEq)]
pub struct AggPlan {
    l_o: usize,
    taps: Vec<Vec<(usize, f64)>>,
}

impl AggPlan {
    pub fn new(l_o: usize, l_c: usize) -> Result<Self> {
        if l_c == 0 {
            return Err(Error::Config("L_c must be at least 1".into()));
        }
        let taps = (0..l_c)
            .map(|j| {
                if l_o == 0 {
                    Vec::new()
                } else if l_o >= l_c {
                    let (start, end) = (j * l_o / l_c, (j + 1) * l_o / l_c);
                    let w = 1.0 / (end - start) as f64;
                    (start..end).map(|i| (i, w)).collect()
                } else {
                    vec![(j * l_o / l_c, 1.0)]
                }
            })
            .collect();
        Ok(Self { l_o, taps })
    }

    pub fn input_len(&self) -> usize {
        self.l_o
    }

    pub fn output_len(&self) -> usize {
        self.taps.len()
    }

    pub fn taps(&self, j: usize) -> &[(usize, f64)] {
        &self.taps[j]
    }

    pub fn apply(&self, x: &Mat) -> Mat {
        assert_eq!(x.rows, self.l_o, "aggregation input length");
        let mut out = Mat::zeros(self.taps.len(), x.cols);
        for (j, taps) in self.taps.iter().enumerate() {
            let row = out.row_mut(j);
            for &(i, w) in taps {
                for (o, v) in row.iter_mut().zip(x.row(i)) {
                    *o += w * v;
                }
            }
        }
        out
    }

    /// Accumulate the transpose map: `d_in += A^T d_out`.
    pub fn apply_transpose_acc(&self, d_out: &Mat, d_in: &mut Mat) {
        assert_eq!(d_out.rows, self.taps.len());
        assert_eq!(d_in.rows, self.l_o);
        for (j, taps) in self.taps.iter().enumerate() {
            for &(i, w) in taps {
                for (o, v) in d_in.row_mut(i).iter_mut().zip(d_out.row(j)) {
                    *o += w * v;
                }
            }
        }
    }
}

pub fn aggregate(ot: &OrganTokens, l_c: usize) -> Result<Tensor> {
    let plan = AggPlan::new(ot.len(), l_c)?;
    let x = Mat::from_vec(ot.len(), ot.dim, ot.data.iter().map(|&v| f64::from(v)).collect());
    let out = plan.apply(&x);
    Tensor::from_f64(&[l_c, ot.dim], &out.data)
}

pub fn fuse_global_local(global: &Tensor, local: &Tensor) -> Result<Tensor> {
    if global.ndim() != 2 || local.ndim() != 2 || global.shape()[1] != local.shape()[1] {
        return Err(Error::ShapeMismatch(format!(
            "cannot stack {:?} over {:?}",
            global.shape(),
            local.shape()
        )));
    }
    let mut data = global.data().to_vec();
    data.extend_from_slice(local.data());
    Tensor::from_vec(&[global.shape()[0] + local.shape()[0], global.shape()[1]], data)
}

/// Result of enhancing one organ.
#[derive(Clone, Debug, PartialEq)]
pub struct Enhanced {
    pub fused: Tensor,
    pub token_mask: TokenMask,
    pub organ_tokens: usize,
    /// The organ had no voxels inside the kept slices.
    pub empty_organ: bool,
}

/// Select, pool and fuse in one step.
pub fn enhance(
    global: &Tensor,
    mask: &OrganMask,
    organ: u8,
    geom: &TokenGeometry,
    l_c: usize,
) -> Result<Enhanced> {
    let token_mask = project_mask_to_tokens(mask, organ, geom)?;
    let selected = select_tokens(global, &token_mask)?;
    let local = aggregate(&selected, l_c)?;
    Ok(Enhanced {
        fused: fuse_global_local(global, &local)?,
        organ_tokens: selected.len(),
        empty_organ: selected.is_empty(),
        token_mask,
    })
}
