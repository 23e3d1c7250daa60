//! Trainable parameters and the per-sample objective.
//!
//! One sample is `T = [global ; local ; text]`: `L` projected visual tokens, `L_c` pooled organ
//! tokens (only when an organ is requested), then the embedded text ids. Only answer positions
//! contribute to the loss.

use rayon::prelude::*;

use super::decoder::Decoder;
use super::loss::{ar_loss, ar_loss_grad};
use super::vocab::{check_ids, BOS, EOS, PAD, VOCAB_SIZE};
use crate::config::{Modality, PipelineConfig};
use crate::error::{Error, Result};
use crate::init::{standard_normal, stream};
use crate::linalg::Mat;
use crate::ose::AggPlan;
use crate::pipeline::{init_projection, FrontEnd, OrganRequest};
use crate::prng::Prng;
use crate::sce::Mhp;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Group {
    /// Projection parameters.
    Adapter,
    /// Text embedding table.
    Text,
    /// Decoder.
    Llm,
}

impl Group {
    pub fn as_str(self) -> &'static str {
        match self {
            Group::Adapter => "adapter",
            Group::Text => "text",
            Group::Llm => "llm",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub group: Group,
    pub shape: Vec<usize>,
}

/// Everything the optimizer may touch. The patch encoder is frozen and lives in
/// [`FrontEnd`] instead.
///
/// The attention key bias is not a parameter: it shifts every score of a query row by the same
/// amount, which softmax cancels, so its gradient is identically zero. It stays at zero.
#[derive(Clone, Debug, PartialEq)]
pub struct Trainable {
    pub mhp: Mhp,
    /// `V x d_f` embedding table.
    pub text: Mat,
    pub decoder: Decoder,
}

impl Trainable {
    /// Fresh parameters; each group draws from its own seed-derived stream.
    pub fn init(config: &PipelineConfig) -> Result<Self> {
        let mhp = Mhp::from_params(&init_projection(config)?)?;
        // unit-normal rows, the usual embedding-table default
        let mut rng = Prng::derive(config.seed, stream::TEXT);
        let text = Mat::from_vec(
            VOCAB_SIZE,
            config.d_f,
            standard_normal(VOCAB_SIZE, config.d_f, &mut rng)?.to_f64(),
        );
        let mut rng = Prng::derive(config.seed, stream::DECODER);
        let decoder = Decoder::init(config.d_f, VOCAB_SIZE, &mut rng)?;
        Ok(Self { mhp, text, decoder })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            mhp: self.mhp.zeros_like(),
            text: Mat::zeros(self.text.rows, self.text.cols),
            decoder: Decoder::zeros(self.decoder.dim(), self.decoder.vocab()),
        }
    }

    pub fn d_f(&self) -> usize {
        self.text.cols
    }

    /// Names, groups and shapes, in the same order as [`Trainable::slices`].
    pub fn specs(&self) -> Vec<ParamSpec> {
        let mut out = Vec::with_capacity(20);
        let mut push = |name: String, group, shape: Vec<usize>| out.push(ParamSpec { name, group, shape });
        for (tag, l) in [("s", &self.mhp.slice), ("v", &self.mhp.volume), ("share", &self.mhp.share)] {
            push(format!("mhp.w_{tag}"), Group::Adapter, vec![l.weight.rows, l.weight.cols]);
            push(format!("mhp.b_{tag}"), Group::Adapter, vec![l.bias.len()]);
        }
        push("text.e_tab".into(), Group::Text, vec![self.text.rows, self.text.cols]);
        for (tag, l) in self.decoder.layers() {
            push(format!("llm.w_{tag}"), Group::Llm, vec![l.weight.rows, l.weight.cols]);
            if tag != "k" {
                push(format!("llm.b_{tag}"), Group::Llm, vec![l.bias.len()]);
            }
        }
        out
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(20);
        for l in [&self.mhp.slice, &self.mhp.volume, &self.mhp.share] {
            out.push(&l.weight.data);
            out.push(&l.bias);
        }
        out.push(&self.text.data);
        for (tag, l) in self.decoder.layers() {
            out.push(&l.weight.data);
            if tag != "k" {
                out.push(&l.bias);
            }
        }
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(20);
        for l in [&mut self.mhp.slice, &mut self.mhp.volume, &mut self.mhp.share] {
            out.push(&mut l.weight.data);
            out.push(&mut l.bias);
        }
        out.push(&mut self.text.data);
        for (tag, l) in self.decoder.layers_mut() {
            out.push(&mut l.weight.data);
            if tag != "k" {
                out.push(&mut l.bias);
            }
        }
        out
    }

    fn add_assign(&mut self, other: &Trainable) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    fn scale(&mut self, s: f64) {
        for a in self.slices_mut() {
            for x in a.iter_mut() {
                *x *= s;
            }
        }
    }

    /// Per-tensor values as `f32`, in [`Trainable::specs`] order.
    pub fn to_tensors(&self) -> Result<Vec<(String, Tensor)>> {
        self.specs()
            .into_iter()
            .zip(self.slices())
            .map(|(spec, data)| Ok((spec.name, Tensor::from_f64(&spec.shape, data)?)))
            .collect()
    }

    /// Overwrite every tensor from `lookup(name)`; shapes must match.
    pub fn load_tensors(&mut self, mut lookup: impl FnMut(&str) -> Result<Tensor>) -> Result<()> {
        let specs = self.specs();
        for (spec, dst) in specs.iter().zip(self.slices_mut()) {
            let t = lookup(&spec.name)?;
            if t.shape() != spec.shape.as_slice() {
                return Err(Error::ShapeMismatch(format!(
                    "{}: expected {:?}, found {:?}",
                    spec.name,
                    spec.shape,
                    t.shape()
                )));
            }
            for (d, &s) in dst.iter_mut().zip(t.data()) {
                *d = f64::from(s);
            }
        }
        Ok(())
    }

    pub fn sample_loss(&self, s: &PreparedSample) -> Result<f64> {
        let (logits, _) = self.forward(s)?;
        ar_loss(&logits, &s.targets(), &s.loss_mask())
    }

    /// Loss of one sample; parameter gradients are accumulated into `grad`.
    pub fn sample_loss_grad(&self, s: &PreparedSample, grad: &mut Trainable) -> Result<f64> {
        let (logits, cache) = self.forward(s)?;
        let (loss, d_logits) = ar_loss_grad(&logits, &s.targets(), &s.loss_mask())?;
        let d_x = self.decoder.backward(&cache.decoder, &d_logits, &mut grad.decoder);

        let prefix = s.prefix_len();
        for (j, &id) in s.ids.iter().enumerate() {
            for (g, d) in grad.text.row_mut(id as usize).iter_mut().zip(d_x.row(prefix + j)) {
                *g += d;
            }
        }
        let l = s.tokens.rows;
        let mut d_global = d_x.rows_range(0, l);
        if let Some(organ) = &s.organ {
            let d_local = d_x.rows_range(l, prefix);
            let mut d_sel = Mat::zeros(organ.selected.len(), d_x.cols);
            organ.plan.apply_transpose_acc(&d_local, &mut d_sel);
            for (r, &i) in organ.selected.iter().enumerate() {
                for (g, d) in d_global.row_mut(i).iter_mut().zip(d_sel.row(r)) {
                    *g += d;
                }
            }
        }
        self.mhp.backward(&s.tokens, &cache.mhp, &d_global, s.modality, &mut grad.mhp);
        Ok(loss)
    }

    /// Mean loss over the batch.
    pub fn batch_loss(&self, batch: &[&PreparedSample]) -> Result<f64> {
        let losses = batch
            .par_iter()
            .map(|s| self.sample_loss(s))
            .collect::<Result<Vec<_>>>()?;
        mean(&losses)
    }

    /// Mean loss and its gradient. Per-sample work runs in parallel; results are reduced in
    /// batch order so the output does not depend on scheduling.
    pub fn batch_loss_grad(&self, batch: &[&PreparedSample]) -> Result<(f64, Trainable)> {
        let parts = batch
            .par_iter()
            .map(|s| {
                let mut g = self.zeros_like();
                let loss = self.sample_loss_grad(s, &mut g)?;
                Ok((loss, g))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut total = self.zeros_like();
        let mut losses = Vec::with_capacity(parts.len());
        for (loss, g) in &parts {
            losses.push(*loss);
            total.add_assign(g);
        }
        total.scale(1.0 / parts.len() as f64);
        Ok((mean(&losses)?, total))
    }

    fn forward(&self, s: &PreparedSample) -> Result<(Mat, ForwardCache)> {
        if self.d_f() != self.mhp.share.out_dim() {
            return Err(Error::ShapeMismatch("text width differs from projection width".into()));
        }
        let (global, mhp_cache) = self.mhp.forward(&s.tokens, s.modality)?;
        let visual = match &s.organ {
            Some(organ) => {
                let mut sel = Mat::zeros(organ.selected.len(), global.cols);
                for (r, &i) in organ.selected.iter().enumerate() {
                    sel.row_mut(r).copy_from_slice(global.row(i));
                }
                Mat::vstack(&global, &organ.plan.apply(&sel))
            }
            None => global,
        };
        let x = Mat::vstack(&visual, &self.embed(&s.ids)?);
        let (logits, dec_cache) = self.decoder.forward(&x);
        Ok((
            logits,
            ForwardCache {
                mhp: mhp_cache,
                decoder: dec_cache,
            },
        ))
    }

    fn embed(&self, ids: &[u32]) -> Result<Mat> {
        check_ids(ids)?;
        let mut out = Mat::zeros(ids.len(), self.d_f());
        for (j, &id) in ids.iter().enumerate() {
            out.row_mut(j).copy_from_slice(self.text.row(id as usize));
        }
        Ok(out)
    }
}

struct ForwardCache {
    mhp: crate::sce::MhpCache,
    decoder: super::decoder::DecoderCache,
}

fn mean(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::DegenerateLoss("empty batch".into()));
    }
    Ok(xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Rows `E_tab[ids[j]]` of a `V x d_f` table.
pub fn embed_text(ids: &[u32], e_tab: &Tensor) -> Result<Tensor> {
    if e_tab.ndim() != 2 {
        return Err(Error::ShapeMismatch(format!("embedding table must be 2-D, got {:?}", e_tab.shape())));
    }
    let (v, d) = (e_tab.shape()[0], e_tab.shape()[1]);
    if let Some(&id) = ids.iter().find(|&&id| id as usize >= v) {
        return Err(Error::Vocab { id, size: v });
    }
    if ids.is_empty() {
        return Err(Error::InvalidShape {
            shape: vec![0, d],
            reason: "no ids to embed".into(),
        });
    }
    let mut data = Vec::with_capacity(ids.len() * d);
    for &id in ids {
        let i = id as usize;
        data.extend_from_slice(&e_tab.data()[i * d..(i + 1) * d]);
    }
    Tensor::from_vec(&[ids.len(), d], data)
}

/// Organ path of one sample: which global tokens are pooled and how.
#[derive(Clone, Debug, PartialEq)]
pub struct OrganPath {
    pub selected: Vec<usize>,
    pub plan: AggPlan,
}

/// A sample with its frozen visual features precomputed.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedSample {
    pub modality: Modality,
    /// Unshuffled visual tokens, `L x d_in`.
    pub tokens: Mat,
    pub organ: Option<OrganPath>,
    /// `[BOS] ++ prompt ++ answer ++ [EOS]`.
    pub ids: Vec<u32>,
    /// True on answer bytes and the closing EOS.
    pub answer_mask: Vec<bool>,
}

impl PreparedSample {
    pub fn prepare(
        front: &FrontEnd,
        input: &Tensor,
        modality: Modality,
        organ: Option<OrganRequest<'_>>,
        prompt: &[u8],
        answer: &[u8],
    ) -> Result<Self> {
        let (grid, _) = front.unshuffled(input, modality)?;
        let (n_s, _, _, d) = grid.dims();
        let tokens = Mat::from_vec(grid.token_count(), d, grid.tensor().to_f64());
        let organ = match organ {
            Some(req) => {
                if req.mask.dims().as_slice() != input.shape() {
                    return Err(Error::Validation(format!(
                        "mask dims {:?} differ from input dims {:?}",
                        req.mask.dims(),
                        input.shape()
                    )));
                }
                let geom = front.geometry(n_s, modality);
                let tm = crate::ose::project_mask_to_tokens(req.mask, req.organ, &geom)?;
                let selected = tm.selected();
                let plan = AggPlan::new(selected.len(), front.config.agg_len(modality))?;
                Some(OrganPath { selected, plan })
            }
            None => None,
        };

        let mut ids = Vec::with_capacity(prompt.len() + answer.len() + 2);
        ids.push(BOS);
        ids.extend(prompt.iter().map(|&b| u32::from(b)));
        ids.extend(answer.iter().map(|&b| u32::from(b)));
        ids.push(EOS);
        let answer_start = 1 + prompt.len();
        let answer_mask = (0..ids.len()).map(|j| j >= answer_start).collect();

        let s = Self {
            modality,
            tokens,
            organ,
            ids,
            answer_mask,
        };
        let len = s.seq_len();
        if len > front.config.max_seq_len {
            return Err(Error::SequenceOverflow {
                len,
                max: front.config.max_seq_len,
            });
        }
        Ok(s)
    }

    /// Visual rows in front of the text.
    pub fn prefix_len(&self) -> usize {
        self.tokens.rows + self.organ.as_ref().map_or(0, |o| o.plan.output_len())
    }

    pub fn seq_len(&self) -> usize {
        self.prefix_len() + self.ids.len()
    }

    /// Targets over the whole sequence; visual positions carry PAD and are masked.
    pub fn targets(&self) -> Vec<u32> {
        let mut t = vec![PAD; self.prefix_len()];
        t.extend_from_slice(&self.ids);
        t
    }

    pub fn loss_mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.prefix_len()];
        m.extend_from_slice(&self.answer_mask);
        m
    }
}
