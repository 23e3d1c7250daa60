//! AdamW and the warmup-cosine learning-rate schedule.

/// Linear warmup over `ceil(ratio * total)` steps, then half-cosine decay to zero.
/// `step` counts from 0; the returned value multiplies the base learning rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WarmupCosine {
    pub total: usize,
    pub warmup: usize,
}

impl WarmupCosine {
    pub fn new(total: usize, ratio: f64) -> Self {
        Self {
            total,
            warmup: (ratio * total as f64).ceil() as usize,
        }
    }

    pub fn factor(&self, step: usize) -> f64 {
        if step < self.warmup {
            return (step + 1) as f64 / self.warmup as f64;
        }
        let span = self.total.saturating_sub(self.warmup).max(1);
        let progress = ((step - self.warmup) as f64 / span as f64).min(1.0);
        0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Moments for one tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// One decoupled-weight-decay Adam update of `param` with learning rate `lr`.
    pub fn step(&mut self, cfg: &AdamConfig, lr: f64, param: &mut [f64], grad: &[f64]) {
        assert_eq!(param.len(), grad.len());
        assert_eq!(param.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        for (((p, &g), m), v) in param.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let update = (*m / bc1) / ((*v / bc2).sqrt() + cfg.eps);
            *p -= lr * (update + cfg.weight_decay * *p);
        }
    }
}
