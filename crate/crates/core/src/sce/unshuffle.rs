use super::{Stage, TokenGrid};
use crate::config::Modality;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Merge each `m x m` block of tokens into one token; block members are concatenated row-major.
pub fn unshuffle(grid: &TokenGrid, m: usize) -> Result<TokenGrid> {
    if grid.stage() != Stage::Positioned {
        return Err(Error::ShapeMismatch("unshuffle expects a positioned grid".into()));
    }
    if m == 0 {
        return Err(Error::ShapeMismatch("unshuffle factor must be at least 1".into()));
    }
    if m > 1 && grid.modality() == Modality::Slice {
        return Err(Error::Modality(format!(
            "slice inputs keep full resolution (m = 1), got m = {m}"
        )));
    }
    let (n_s, rows, cols, d) = grid.dims();
    if rows % m != 0 || cols % m != 0 {
        return Err(Error::ShapeMismatch(format!(
            "grid {rows} x {cols} is not divisible by m = {m}"
        )));
    }
    let (out_rows, out_cols) = (rows / m, cols / m);
    let mut out = Vec::with_capacity(grid.tensor().len());
    for i in 0..n_s {
        for r in 0..out_rows {
            for c in 0..out_cols {
                for a in 0..m {
                    for b in 0..m {
                        out.extend_from_slice(grid.token(i, r * m + a, c * m + b));
                    }
                }
            }
        }
    }
    TokenGrid::new(
        Tensor::from_vec(&[n_s, out_rows, out_cols, d * m * m], out)?,
        Stage::Unshuffled,
        grid.modality(),
    )
}

/// Inverse of [`unshuffle`]: split each token back into its `m x m` block.
pub fn reshuffle(grid: &TokenGrid, m: usize) -> Result<TokenGrid> {
    if grid.stage() != Stage::Unshuffled {
        return Err(Error::ShapeMismatch("reshuffle expects an unshuffled grid".into()));
    }
    let (n_s, rows, cols, d_big) = grid.dims();
    if m == 0 || d_big % (m * m) != 0 {
        return Err(Error::ShapeMismatch(format!(
            "feature dim {d_big} is not divisible by m^2 for m = {m}"
        )));
    }
    let d = d_big / (m * m);
    let (out_rows, out_cols) = (rows * m, cols * m);
    let mut out = vec![0.0f32; grid.tensor().len()];
    for i in 0..n_s {
        for r in 0..rows {
            for c in 0..cols {
                let token = grid.token(i, r, c);
                for a in 0..m {
                    for b in 0..m {
                        let src = &token[(a * m + b) * d..(a * m + b + 1) * d];
                        let dst = ((i * out_rows + r * m + a) * out_cols + c * m + b) * d;
                        out[dst..dst + d].copy_from_slice(src);
                    }
                }
            }
        }
    }
    TokenGrid::new(
        Tensor::from_vec(&[n_s, out_rows, out_cols, d], out)?,
        Stage::Positioned,
        grid.modality(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prng::Prng;

    fn positioned(shape: [usize; 4], modality: Modality, rng: &mut Prng) -> TokenGrid {
        let n = shape.iter().product();
        let data = rng.uniform(n, -1.0, 1.0).unwrap();
        TokenGrid::new(Tensor::from_vec(&shape, data).unwrap(), Stage::Positioned, modality).unwrap()
    }

    #[test]
    fn identity_factor() {
        let mut rng = Prng::new(1);
        let g = positioned([2, 3, 3, 4], Modality::Volume, &mut rng);
        let out = unshuffle(&g, 1).unwrap();
        assert!(out.tensor().bit_eq(g.tensor()));
    }

    #[test]
    fn two_by_two_block_layout() {
        let g = TokenGrid::new(
            Tensor::from_vec(&[1, 2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
            Stage::Positioned,
            Modality::Volume,
        )
        .unwrap();
        let out = unshuffle(&g, 2).unwrap();
        assert_eq!(out.dims(), (1, 1, 1, 4));
        assert_eq!(out.tensor().data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn default_grid_shrinks() {
        let g = TokenGrid::new(Tensor::zeros(&[1, 24, 24, 3]).unwrap(), Stage::Positioned, Modality::Volume).unwrap();
        assert_eq!(unshuffle(&g, 2).unwrap().dims(), (1, 12, 12, 12));
    }

    #[test]
    fn errors() {
        let mut rng = Prng::new(2);
        let g = positioned([1, 4, 6, 2], Modality::Volume, &mut rng);
        assert!(matches!(unshuffle(&g, 4), Err(Error::ShapeMismatch(_))));
        let s = positioned([1, 4, 4, 2], Modality::Slice, &mut rng);
        assert!(matches!(unshuffle(&s, 2), Err(Error::Modality(_))));
        assert!(unshuffle(&s, 1).is_ok());
    }

    #[test]
    fn round_trip_random_grids() {
        let mut rng = Prng::new(3);
        for m in 1..=4 {
            for _ in 0..25 {
                let shape = [
                    1 + rng.next_below(3) as usize,
                    m * (1 + rng.next_below(3) as usize),
                    m * (1 + rng.next_below(3) as usize),
                    1 + rng.next_below(5) as usize,
                ];
                let g = positioned(shape, Modality::Volume, &mut rng);
                let back = reshuffle(&unshuffle(&g, m).unwrap(), m).unwrap();
                assert!(back.tensor().bit_eq(g.tensor()));
            }
        }
    }
}
