//! Modality-routed hybrid projection.
//!
//! Every token goes through exactly one expert, chosen by the modality of the whole input:
//! `h = GELU(W_e z + b_e)` with `e = slice` or `e = volume`, then `out = W_share h + b_share`.

use super::{Stage, TokenGrid};
use crate::config::Modality;
use crate::error::{Error, Result};
use crate::init::xavier_uniform;
use crate::linalg::{gelu, gelu_grad, Linear, Mat};
use crate::prng::Prng;
use crate::tensor::Tensor;

/// Persisted projection parameters. `d_mid` equals `d_f`. The experts may differ in input
/// width: slice tokens are never unshuffled, so `W_s` takes the positioned width while `W_v`
/// takes that width times `m^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct MhpParams {
    pub w_s: Tensor,
    pub b_s: Tensor,
    pub w_v: Tensor,
    pub b_v: Tensor,
    pub w_share: Tensor,
    pub b_share: Tensor,
}

impl MhpParams {
    pub fn init(d_in_slice: usize, d_in_volume: usize, d_f: usize, rng: &mut Prng) -> Result<Self> {
        Ok(Self {
            w_s: xavier_uniform(d_f, d_in_slice, rng)?,
            b_s: Tensor::zeros(&[d_f])?,
            w_v: xavier_uniform(d_f, d_in_volume, rng)?,
            b_v: Tensor::zeros(&[d_f])?,
            w_share: xavier_uniform(d_f, d_f, rng)?,
            b_share: Tensor::zeros(&[d_f])?,
        })
    }

    /// Input width of the expert that `modality` routes to.
    pub fn d_in(&self, modality: Modality) -> usize {
        match modality {
            Modality::Slice => self.w_s.shape()[1],
            Modality::Volume => self.w_v.shape()[1],
        }
    }

    pub fn d_f(&self) -> usize {
        self.w_share.shape()[0]
    }

    pub fn validate(&self) -> Result<()> {
        let d_mid = self.w_s.shape()[0];
        let d_f = self.w_share.shape()[0];
        let ok = self.w_s.ndim() == 2
            && self.w_v.ndim() == 2
            && self.w_v.shape()[0] == d_mid
            && self.b_s.shape() == [d_mid]
            && self.b_v.shape() == [d_mid]
            && self.w_share.shape() == [d_f, d_mid]
            && self.b_share.shape() == [d_f]
            && d_mid == d_f;
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch("inconsistent projection parameter shapes".into()))
        }
    }
}

fn linear_from(w: &Tensor, b: &Tensor) -> Linear {
    let s = w.shape();
    Linear {
        weight: Mat::from_vec(s[0], s[1], w.to_f64()),
        bias: b.to_f64(),
    }
}

fn linear_to(l: &Linear) -> (Tensor, Tensor) {
    (
        Tensor::from_f64(&[l.weight.rows, l.weight.cols], &l.weight.data).expect("non-empty"),
        Tensor::from_f64(&[l.bias.len()], &l.bias).expect("non-empty"),
    )
}

/// Working (`f64`) form of the projection, also used as its own gradient container.
#[derive(Clone, Debug, PartialEq)]
pub struct Mhp {
    pub slice: Linear,
    pub volume: Linear,
    pub share: Linear,
}

/// Forward intermediates needed by [`Mhp::backward`].
#[derive(Clone, Debug)]
pub struct MhpCache {
    pre: Mat,
    hidden: Mat,
}

impl Mhp {
    pub fn from_params(p: &MhpParams) -> Result<Self> {
        p.validate()?;
        Ok(Self {
            slice: linear_from(&p.w_s, &p.b_s),
            volume: linear_from(&p.w_v, &p.b_v),
            share: linear_from(&p.w_share, &p.b_share),
        })
    }

    pub fn to_params(&self) -> MhpParams {
        let (w_s, b_s) = linear_to(&self.slice);
        let (w_v, b_v) = linear_to(&self.volume);
        let (w_share, b_share) = linear_to(&self.share);
        MhpParams {
            w_s,
            b_s,
            w_v,
            b_v,
            w_share,
            b_share,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            slice: Linear::zeros(self.slice.out_dim(), self.slice.in_dim()),
            volume: Linear::zeros(self.volume.out_dim(), self.volume.in_dim()),
            share: Linear::zeros(self.share.out_dim(), self.share.in_dim()),
        }
    }

    pub fn expert(&self, modality: Modality) -> &Linear {
        match modality {
            Modality::Slice => &self.slice,
            Modality::Volume => &self.volume,
        }
    }

    fn expert_mut(&mut self, modality: Modality) -> &mut Linear {
        match modality {
            Modality::Slice => &mut self.slice,
            Modality::Volume => &mut self.volume,
        }
    }

    pub fn forward(&self, tokens: &Mat, modality: Modality) -> Result<(Mat, MhpCache)> {
        let expert = self.expert(modality);
        if tokens.cols != expert.in_dim() {
            return Err(Error::ShapeMismatch(format!(
                "projection expects {} input features, got {}",
                expert.in_dim(),
                tokens.cols
            )));
        }
        let pre = expert.forward(tokens);
        let hidden = Mat::from_vec(pre.rows, pre.cols, pre.data.iter().map(|&x| gelu(x)).collect());
        let out = self.share.forward(&hidden);
        Ok((out, MhpCache { pre, hidden }))
    }

    /// Accumulate parameter gradients into `grad`. The input tokens come from the frozen
    /// encoder, so no input gradient is produced.
    pub fn backward(&self, tokens: &Mat, cache: &MhpCache, d_out: &Mat, modality: Modality, grad: &mut Mhp) {
        let mut d_hidden = self.share.backward(&cache.hidden, d_out, &mut grad.share);
        for (g, &x) in d_hidden.data.iter_mut().zip(&cache.pre.data) {
            *g *= gelu_grad(x);
        }
        self.expert(modality)
            .backward_params(tokens, &d_hidden, grad.expert_mut(modality));
    }
}

/// Project an unshuffled grid to `L x d_f` tokens in (unit, row, col) scan order.
pub fn mhp_project(grid: &TokenGrid, params: &MhpParams, modality: Modality) -> Result<Tensor> {
    if grid.stage() != Stage::Unshuffled {
        return Err(Error::ShapeMismatch("projection expects an unshuffled grid".into()));
    }
    let (_, _, _, d) = grid.dims();
    if d != params.d_in(modality) {
        return Err(Error::ShapeMismatch(format!(
            "grid feature dim {d} differs from projection input dim {}",
            params.d_in(modality)
        )));
    }
    let mhp = Mhp::from_params(params)?;
    let tokens = Mat::from_vec(grid.token_count(), d, grid.tensor().to_f64());
    let (out, _) = mhp.forward(&tokens, modality)?;
    Tensor::from_f64(&[out.rows, out.cols], &out.data)
}
