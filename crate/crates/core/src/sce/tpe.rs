use super::{Stage, TokenGrid};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Sinusoidal tables for the depth, height and width axes of a token grid.
#[derive(Clone, Debug, PartialEq)]
pub struct TpeTables {
    pub depth: Tensor,
    pub height: Tensor,
    pub width: Tensor,
}

/// `n x d` table with `[p, 2i] = sin(p / 10000^(2i/d))` and `[p, 2i+1] = cos(...)`.
pub fn sinusoid_table(n: usize, d: usize) -> Result<Tensor> {
    if d == 0 || d % 2 != 0 {
        return Err(Error::InvalidDim(format!(
            "positional dim must be positive and even, got {d}"
        )));
    }
    let mut data = Vec::with_capacity(n * d);
    for p in 0..n {
        for i in 0..d / 2 {
            let angle = p as f64 / 10_000f64.powf((2 * i) as f64 / d as f64);
            data.push(angle.sin() as f32);
            data.push(angle.cos() as f32);
        }
    }
    Tensor::from_vec(&[n, d], data)
}

pub fn build_tpe(
    n_s: usize,
    rows: usize,
    cols: usize,
    d_z: usize,
    d_y: usize,
    d_x: usize,
) -> Result<TpeTables> {
    Ok(TpeTables {
        depth: sinusoid_table(n_s, d_z)?,
        height: sinusoid_table(rows, d_y)?,
        width: sinusoid_table(cols, d_x)?,
    })
}

fn table_row(t: &Tensor, i: usize) -> &[f32] {
    let d = t.shape()[1];
    &t.data()[i * d..(i + 1) * d]
}

/// Concatenate `[feature | depth[i] | height[r] | width[c]]` onto every token `(i, r, c)`.
pub fn apply_tpe(grid: &TokenGrid, tables: &TpeTables) -> Result<TokenGrid> {
    if grid.stage() != Stage::Encoded {
        return Err(Error::ShapeMismatch(
            "positional embedding applies to encoded grids only".into(),
        ));
    }
    let (n_s, rows, cols, d_v) = grid.dims();
    let lengths = (
        tables.depth.shape()[0],
        tables.height.shape()[0],
        tables.width.shape()[0],
    );
    if lengths != (n_s, rows, cols) {
        return Err(Error::ShapeMismatch(format!(
            "positional tables cover {lengths:?} but the grid is {:?}",
            (n_s, rows, cols)
        )));
    }
    let d_out = d_v + tables.depth.shape()[1] + tables.height.shape()[1] + tables.width.shape()[1];
    let mut out = Vec::with_capacity(n_s * rows * cols * d_out);
    for i in 0..n_s {
        for r in 0..rows {
            for c in 0..cols {
                out.extend_from_slice(grid.token(i, r, c));
                out.extend_from_slice(table_row(&tables.depth, i));
                out.extend_from_slice(table_row(&tables.height, r));
                out.extend_from_slice(table_row(&tables.width, c));
            }
        }
    }
    TokenGrid::new(
        Tensor::from_vec(&[n_s, rows, cols, d_out], out)?,
        Stage::Positioned,
        grid.modality(),
    )
}
