//! Two-stage training loop.

use serde::Serialize;

use super::model::{Group, PreparedSample, Trainable};
use super::optim::{AdamConfig, AdamState, WarmupCosine};
use crate::error::{Error, Result};
use crate::init::stream;
use crate::prng::Prng;

pub const STAGE1_LR_ADAPTER: f64 = 2e-4;
pub const STAGE2_LR_ADAPTER: f64 = 5e-5;
pub const STAGE2_LR_LLM: f64 = 5e-5;
pub const WARMUP_RATIO: f64 = 0.03;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainConfig {
    pub stage: u8,
    pub steps: usize,
    pub batch_size: usize,
    pub lr_adapter: f64,
    /// Used for the decoder and, unless frozen, the text table. Ignored in stage 1.
    pub lr_llm: f64,
    pub freeze_text_embed: bool,
    pub warmup_ratio: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// Stage defaults: stage 1 trains the projection at 2e-4; stage 2 trains projection,
    /// decoder and text table at 5e-5.
    pub fn for_stage(stage: u8, steps: usize, seed: u64) -> Result<Self> {
        let lr_adapter = match stage {
            1 => STAGE1_LR_ADAPTER,
            2 => STAGE2_LR_ADAPTER,
            s => return Err(Error::Config(format!("stage must be 1 or 2, got {s}"))),
        };
        Ok(Self {
            stage,
            steps,
            batch_size: 8,
            lr_adapter,
            lr_llm: STAGE2_LR_LLM,
            freeze_text_embed: false,
            warmup_ratio: WARMUP_RATIO,
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.stage, 1 | 2) {
            return Err(Error::Config(format!("stage must be 1 or 2, got {}", self.stage)));
        }
        if self.steps == 0 || self.batch_size == 0 {
            return Err(Error::Config("steps and batch size must be at least 1".into()));
        }
        if !(self.lr_adapter > 0.0 && self.lr_llm > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        Ok(())
    }

    /// Base learning rate for a group, or `None` when the group is frozen in this stage.
    pub fn lr(&self, group: Group) -> Option<f64> {
        match (self.stage, group) {
            (_, Group::Adapter) => Some(self.lr_adapter),
            (2, Group::Llm) => Some(self.lr_llm),
            (2, Group::Text) if !self.freeze_text_embed => Some(self.lr_llm),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainOutcome {
    /// Mean batch loss before each update.
    pub loss_curve: Vec<f64>,
    /// Mean loss over the whole dataset after the last update.
    pub final_loss: f64,
    pub steps: usize,
}

/// Batches of indices: each epoch is a fresh permutation of the dataset.
struct Batcher {
    rng: Prng,
    order: Vec<usize>,
    pos: usize,
    n: usize,
}

impl Batcher {
    fn new(n: usize, seed: u64) -> Self {
        Self {
            rng: Prng::derive(seed, stream::SHUFFLE),
            order: Vec::new(),
            pos: 0,
            n,
        }
    }

    fn next(&mut self, size: usize) -> Vec<usize> {
        let size = size.min(self.n);
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.pos == self.order.len() {
                self.order = self.rng.sample_indices(self.n, self.n);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

pub fn train(model: &mut Trainable, data: &[PreparedSample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Validation("training set is empty".into()));
    }
    let specs = model.specs();
    let adam = AdamConfig::default();
    let mut states: Vec<Option<(f64, AdamState)>> = specs
        .iter()
        .map(|s| cfg.lr(s.group).map(|lr| (lr, AdamState::new(s.shape.iter().product()))))
        .collect();
    let schedule = WarmupCosine::new(cfg.steps, cfg.warmup_ratio);
    let mut batcher = Batcher::new(data.len(), cfg.seed);
    let mut curve = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        let batch: Vec<&PreparedSample> = batcher.next(cfg.batch_size).into_iter().map(|i| &data[i]).collect();
        let (loss, grad) = model.batch_loss_grad(&batch)?;
        if !loss.is_finite() {
            return Err(Error::NumericalCheck(format!("loss became {loss} at step {step}")));
        }
        curve.push(loss);
        let factor = schedule.factor(step);
        for ((state, param), g) in states.iter_mut().zip(model.slices_mut()).zip(grad.slices()) {
            if let Some((lr, st)) = state {
                st.step(&adam, *lr * factor, param, g);
            }
        }
    }

    let all: Vec<&PreparedSample> = data.iter().collect();
    Ok(TrainOutcome {
        final_loss: model.batch_loss(&all)?,
        loss_curve: curve,
        steps: cfg.steps,
    })
}
