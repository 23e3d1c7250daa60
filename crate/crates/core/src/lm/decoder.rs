//! Single-block causal decoder without normalisation layers:
//!
//! ```text
//! h1 = x + W_o · attn(x) + b_o          attn: one head, scale 1/sqrt(d), lower-triangular
//! h2 = h1 + W_2 · GELU(W_1 · h1 + b_1) + b_2
//! logits = W_out · h2 + b_out
//! ```

use crate::error::{Error, Result};
use crate::init::xavier_uniform_f64;
use crate::linalg::{dot, gelu, gelu_grad, Linear, Mat};
use crate::prng::Prng;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Decoder {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub up: Linear,
    pub down: Linear,
    pub head: Linear,
}

/// Forward intermediates for [`Decoder::backward`].
#[derive(Clone, Debug)]
pub struct DecoderCache {
    x: Mat,
    q: Mat,
    k: Mat,
    v: Mat,
    /// Row `i` holds the `i + 1` causal attention weights.
    attn: Vec<Vec<f64>>,
    ctx: Mat,
    h1: Mat,
    pre: Mat,
    act: Mat,
    h2: Mat,
}

fn xavier_linear(out_dim: usize, in_dim: usize, rng: &mut Prng) -> Result<Linear> {
    Ok(Linear {
        weight: Mat::from_vec(out_dim, in_dim, xavier_uniform_f64(out_dim, in_dim, rng)?),
        bias: vec![0.0; out_dim],
    })
}

impl Decoder {
    pub fn init(d: usize, vocab: usize, rng: &mut Prng) -> Result<Self> {
        Ok(Self {
            q: xavier_linear(d, d, rng)?,
            k: xavier_linear(d, d, rng)?,
            v: xavier_linear(d, d, rng)?,
            o: xavier_linear(d, d, rng)?,
            up: xavier_linear(4 * d, d, rng)?,
            down: xavier_linear(d, 4 * d, rng)?,
            head: xavier_linear(vocab, d, rng)?,
        })
    }

    pub fn zeros(d: usize, vocab: usize) -> Self {
        Self {
            q: Linear::zeros(d, d),
            k: Linear::zeros(d, d),
            v: Linear::zeros(d, d),
            o: Linear::zeros(d, d),
            up: Linear::zeros(4 * d, d),
            down: Linear::zeros(d, 4 * d),
            head: Linear::zeros(vocab, d),
        }
    }

    pub fn dim(&self) -> usize {
        self.q.in_dim()
    }

    pub fn vocab(&self) -> usize {
        self.head.out_dim()
    }

    /// `(name, layer)` pairs in a fixed order.
    pub fn layers(&self) -> [(&'static str, &Linear); 7] {
        [
            ("q", &self.q),
            ("k", &self.k),
            ("v_attn", &self.v),
            ("o", &self.o),
            ("1", &self.up),
            ("2", &self.down),
            ("out", &self.head),
        ]
    }

    pub fn layers_mut(&mut self) -> [(&'static str, &mut Linear); 7] {
        [
            ("q", &mut self.q),
            ("k", &mut self.k),
            ("v_attn", &mut self.v),
            ("o", &mut self.o),
            ("1", &mut self.up),
            ("2", &mut self.down),
            ("out", &mut self.head),
        ]
    }

    pub fn forward(&self, x: &Mat) -> (Mat, DecoderCache) {
        let n = x.rows;
        let scale = 1.0 / (self.dim() as f64).sqrt();
        let q = self.q.forward(x);
        let k = self.k.forward(x);
        let v = self.v.forward(x);

        let mut attn = Vec::with_capacity(n);
        let mut ctx = Mat::zeros(n, v.cols);
        for i in 0..n {
            let scores: Vec<f64> = (0..=i).map(|j| dot(q.row(i), k.row(j)) * scale).collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            let weights: Vec<f64> = exps.iter().map(|e| e / total).collect();
            let row = ctx.row_mut(i);
            for (j, &a) in weights.iter().enumerate() {
                for (c, vv) in row.iter_mut().zip(v.row(j)) {
                    *c += a * vv;
                }
            }
            attn.push(weights);
        }

        let h1 = x.add(&self.o.forward(&ctx));
        let pre = self.up.forward(&h1);
        let act = Mat::from_vec(pre.rows, pre.cols, pre.data.iter().map(|&u| gelu(u)).collect());
        let h2 = h1.add(&self.down.forward(&act));
        let logits = self.head.forward(&h2);
        let cache = DecoderCache {
            x: x.clone(),
            q,
            k,
            v,
            attn,
            ctx,
            h1,
            pre,
            act,
            h2,
        };
        (logits, cache)
    }

    /// Accumulate parameter gradients into `grad`; returns `dL/dx`.
    pub fn backward(&self, cache: &DecoderCache, d_logits: &Mat, grad: &mut Decoder) -> Mat {
        let n = cache.x.rows;
        let scale = 1.0 / (self.dim() as f64).sqrt();

        let d_h2 = self.head.backward(&cache.h2, d_logits, &mut grad.head);
        let mut d_act = self.down.backward(&cache.act, &d_h2, &mut grad.down);
        for (g, &u) in d_act.data.iter_mut().zip(&cache.pre.data) {
            *g *= gelu_grad(u);
        }
        let mut d_h1 = d_h2;
        d_h1.add_assign(&self.up.backward(&cache.h1, &d_act, &mut grad.up));

        let d_ctx = self.o.backward(&cache.ctx, &d_h1, &mut grad.o);
        let mut d_q = Mat::zeros(n, cache.q.cols);
        let mut d_k = Mat::zeros(n, cache.k.cols);
        let mut d_v = Mat::zeros(n, cache.v.cols);
        for i in 0..n {
            let weights = &cache.attn[i];
            let dc = d_ctx.row(i);
            let d_a: Vec<f64> = (0..=i).map(|j| dot(dc, cache.v.row(j))).collect();
            let inner: f64 = weights.iter().zip(&d_a).map(|(a, g)| a * g).sum();
            for j in 0..=i {
                let a = weights[j];
                for (o, g) in d_v.row_mut(j).iter_mut().zip(dc) {
                    *o += a * g;
                }
                let d_s = a * (d_a[j] - inner) * scale;
                if d_s == 0.0 {
                    continue;
                }
                for (o, kk) in d_q.row_mut(i).iter_mut().zip(cache.k.row(j)) {
                    *o += d_s * kk;
                }
                for (o, qq) in d_k.row_mut(j).iter_mut().zip(cache.q.row(i)) {
                    *o += d_s * qq;
                }
            }
        }

        let mut d_x = d_h1;
        d_x.add_assign(&self.q.backward(&cache.x, &d_q, &mut grad.q));
        d_x.add_assign(&self.k.backward(&cache.x, &d_k, &mut grad.k));
        d_x.add_assign(&self.v.backward(&cache.x, &d_v, &mut grad.v));
        d_x
    }
}

/// Logits `n x V` for an `n x d_f` input.
pub fn decoder_forward(t: &Tensor, p: &Decoder) -> Result<Tensor> {
    if t.ndim() != 2 || t.shape()[1] != p.dim() {
        return Err(Error::ShapeMismatch(format!(
            "decoder expects n x {} input, got {:?}",
            p.dim(),
            t.shape()
        )));
    }
    let x = Mat::from_vec(t.shape()[0], t.shape()[1], t.to_f64());
    let (logits, _) = p.forward(&x);
    Tensor::from_f64(&[logits.rows, logits.cols], &logits.data)
}
