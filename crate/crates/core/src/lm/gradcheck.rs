//! Central-difference verification of the analytic gradients.

use rayon::prelude::*;
use serde::Serialize;

use super::model::{PreparedSample, Trainable};
use crate::config::{Modality, PipelineConfig};
use crate::error::Result;
use crate::init::stream;
use crate::pipeline::{FrontEnd, OrganRequest};
use crate::prng::Prng;
use crate::tensor::Tensor;
use crate::volume::OrganMask;

pub const DEFAULT_EPS: f64 = 1e-4;
pub const COORDS_PER_TENSOR: usize = 64;
pub const TOLERANCE: f64 = 1e-4;

/// `|a - fd| / max(|a|, |fd|, 1e-12)`.
pub fn rel_err(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-12)
}

/// Largest relative error of `analytic` against central differences of `f` at `coords`.
/// `x` is perturbed in place and restored.
pub fn check_function(
    x: &mut [f64],
    analytic: &[f64],
    coords: &[usize],
    eps: f64,
    mut f: impl FnMut(&[f64]) -> f64,
) -> f64 {
    let mut worst = 0.0f64;
    for &i in coords {
        let orig = x[i];
        x[i] = orig + eps;
        let up = f(x);
        x[i] = orig - eps;
        let down = f(x);
        x[i] = orig;
        worst = worst.max(rel_err(analytic[i], (up - down) / (2.0 * eps)));
    }
    worst
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub group: &'static str,
    pub size: usize,
    pub checked: usize,
    pub max_rel_err: f64,
    pub max_abs_grad: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradReport {
    pub eps: f64,
    pub max_rel_err: f64,
    pub loss: f64,
    pub params: Vec<ParamCheck>,
    /// Frozen tensors, listed but never perturbed.
    pub excluded: Vec<String>,
}

impl GradReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_err <= tol
    }
}

/// Compare analytic and finite-difference gradients of the mean batch loss on `per_tensor`
/// random coordinates of every trainable tensor (all of them when the tensor is smaller).
pub fn grad_check(
    model: &Trainable,
    batch: &[PreparedSample],
    eps: f64,
    per_tensor: usize,
    seed: u64,
) -> Result<GradReport> {
    let refs: Vec<&PreparedSample> = batch.iter().collect();
    let (loss, grad) = model.batch_loss_grad(&refs)?;
    let specs = model.specs();
    let mut rng = Prng::derive(seed, stream::GRADCHECK);
    let plan: Vec<Vec<usize>> = specs
        .iter()
        .map(|s| {
            let n: usize = s.shape.iter().product();
            if n <= per_tensor {
                (0..n).collect()
            } else {
                let mut idx = rng.sample_indices(n, per_tensor);
                idx.sort_unstable();
                idx
            }
        })
        .collect();

    let grads = grad.slices();
    let params = (0..specs.len())
        .into_par_iter()
        .map(|t| {
            let mut probe = model.clone();
            let mut worst = 0.0f64;
            let mut failure = None;
            for &i in &plan[t] {
                let orig = probe.slices()[t][i];
                let mut eval = |v: f64| {
                    probe.slices_mut()[t][i] = v;
                    probe.batch_loss(&refs)
                };
                let up = eval(orig + eps);
                let down = eval(orig - eps);
                probe.slices_mut()[t][i] = orig;
                match (up, down) {
                    (Ok(u), Ok(d)) => worst = worst.max(rel_err(grads[t][i], (u - d) / (2.0 * eps))),
                    (Err(e), _) | (_, Err(e)) => {
                        failure = Some(e);
                        break;
                    }
                }
            }
            if let Some(e) = failure {
                return Err(e);
            }
            Ok(ParamCheck {
                name: specs[t].name.clone(),
                group: specs[t].group.as_str(),
                size: grads[t].len(),
                checked: plan[t].len(),
                max_rel_err: worst,
                max_abs_grad: grads[t].iter().fold(0.0f64, |m, g| m.max(g.abs())),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(GradReport {
        eps,
        max_rel_err: params.iter().fold(0.0f64, |m, p| m.max(p.max_rel_err)),
        loss,
        params,
        excluded: vec!["vision.w_enc".into(), "vision.b_enc".into()],
    })
}

/// Configuration of the default check instance: 16 visual tokens per sample, `d_f = 32`.
pub fn small_config(seed: u64) -> PipelineConfig {
    PipelineConfig {
        patch: 4,
        d_v: 16,
        d_z: 4,
        d_y: 4,
        d_x: 4,
        d_f: 32,
        m_volume: 2,
        seed,
        l_c_slice: 5,
        l_c_volume: 4,
        max_seq_len: 128,
    }
}

/// A two-sample batch exercising both experts: a volume with an organ mask and an
/// un-enhanced slice, each sized to give 16 visual tokens under `config`.
pub fn small_instance(config: &PipelineConfig) -> Result<(FrontEnd, Trainable, Vec<PreparedSample>)> {
    let front = FrontEnd::new(config.clone())?;
    let model = Trainable::init(config)?;
    let mut rng = Prng::derive(config.seed, stream::SYNTHETIC);

    let km = config.patch * config.m_volume;
    let side = 4 * km;
    let vol = Tensor::from_vec(&[3, side, side], rng.uniform(3 * side * side, 0.0, 1.0)?)?;
    let mut labels = vec![0u8; 3 * side * side];
    // a blob over parts of 3 x 2 tokens: uneven pooling bins when L_c = 4
    for y in km / 2..(5 * km) / 2 {
        for x in km + 1..3 * km - 1 {
            labels[side * side + y * side + x] = 5;
        }
    }
    let mask = OrganMask::new([3, side, side], labels)?;
    let volume = PreparedSample::prepare(
        &front,
        &vol,
        Modality::Volume,
        Some(OrganRequest { mask: &mask, organ: 5 }),
        b"where?",
        b"liver",
    )?;

    let side = 4 * config.patch;
    let sl = Tensor::from_vec(&[1, side, side], rng.uniform(side * side, 0.0, 1.0)?)?;
    let slice = PreparedSample::prepare(&front, &sl, Modality::Slice, None, b"size?", b"3 cm")?;
    Ok((front, model, vec![volume, slice]))
}
