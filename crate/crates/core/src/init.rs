use crate::error::Result;
use crate::prng::Prng;
use crate::tensor::Tensor;

/// Named PRNG streams, so each parameter group's initialisation is independent of the others.
pub mod stream {
    pub const ENCODER: u64 = 1;
    pub const PROJECTION: u64 = 2;
    pub const TEXT: u64 = 3;
    pub const DECODER: u64 = 4;
    pub const GRADCHECK: u64 = 5;
    pub const SYNTHETIC: u64 = 6;
    pub const SHUFFLE: u64 = 7;
}

/// `out x in` weight drawn from `U(-b, b)` with `b = sqrt(6 / (in + out))`.
pub fn xavier_uniform(out_dim: usize, in_dim: usize, rng: &mut Prng) -> Result<Tensor> {
    let bound = (6.0 / (in_dim + out_dim) as f64).sqrt() as f32;
    let data = rng.uniform(out_dim * in_dim, -bound, bound)?;
    Tensor::from_vec(&[out_dim, in_dim], data)
}

/// `rows x cols` standard-normal draws (Box-Muller), stored as `f32`.
pub fn standard_normal(rows: usize, cols: usize, rng: &mut Prng) -> Result<Tensor> {
    let n = rows * cols;
    let mut data = Vec::with_capacity(n + 1);
    while data.len() < n {
        // 1 - u keeps the log argument in (0, 1]
        let r = (-2.0 * (1.0 - rng.next_f64()).ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * rng.next_f64();
        data.push((r * theta.cos()) as f32);
        data.push((r * theta.sin()) as f32);
    }
    data.truncate(n);
    Tensor::from_vec(&[rows, cols], data)
}

/// Same draw as [`xavier_uniform`], widened to `f64`.
pub fn xavier_uniform_f64(out_dim: usize, in_dim: usize, rng: &mut Prng) -> Result<Vec<f64>> {
    Ok(xavier_uniform(out_dim, in_dim, rng)?.to_f64())
}
