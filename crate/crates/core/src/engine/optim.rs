//! AdamW with decoupled weight decay.

use serde::{Deserialize, Serialize};

use crate::error::{AmdetError, Result};
use crate::tensor::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Cosine decay from `lr` to zero over `total_steps`.
    Cosine { total_steps: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global L2 norm bound on the gradient; off when `None`.
    pub clip_grad_norm: Option<f64>,
    pub schedule: LrSchedule,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-3,
            weight_decay: 1e-6,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_grad_norm: None,
            schedule: LrSchedule::Constant,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(AmdetError::invalid(name, format!("must be positive, got {v}")))
            }
        };
        positive("optimizer.lr", self.lr)?;
        positive("optimizer.eps", self.eps)?;
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(AmdetError::invalid("optimizer.weight_decay", "must be non-negative"));
        }
        for (name, b) in [("optimizer.beta1", self.beta1), ("optimizer.beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(AmdetError::invalid(name, format!("must lie in [0, 1), got {b}")));
            }
        }
        if let Some(c) = self.clip_grad_norm {
            positive("optimizer.clip_grad_norm", c)?;
        }
        Ok(())
    }

    fn lr_at(&self, step: u64) -> f64 {
        match self.schedule {
            LrSchedule::Constant => self.lr,
            LrSchedule::Cosine { total_steps } => {
                let t = (step.min(total_steps) as f64) / (total_steps.max(1) as f64);
                0.5 * self.lr * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamWState {
    pub config: AdamWConfig,
    pub step: u64,
    pub m: Vec<Mat>,
    pub v: Vec<Mat>,
}

impl AdamWState {
    pub fn new(config: AdamWConfig, params: &[Mat]) -> Self {
        let zeros = |p: &Mat| Mat::zeros(p.rows, p.cols);
        AdamWState {
            config,
            step: 0,
            m: params.iter().map(zeros).collect(),
            v: params.iter().map(zeros).collect(),
        }
    }
}

/// One decoupled-weight-decay Adam update of every tensor in `params`.
///
/// The step is applied atomically: on a non-finite update nothing is written.
pub fn adamw_step(params: &mut [Mat], grads: &[Mat], state: &mut AdamWState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(AmdetError::shape(
            "adamw_step tensor count",
            params.len(),
            (grads.len(), state.m.len()),
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[i].shape() {
            return Err(AmdetError::shape(
                format!("adamw_step tensor {i}"),
                p.shape(),
                g.shape(),
            ));
        }
    }

    let cfg = state.config.clone();
    let clip = match cfg.clip_grad_norm {
        Some(max_norm) => {
            let norm = grads
                .iter()
                .flat_map(|g| g.data.iter())
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            if norm > max_norm {
                max_norm / norm
            } else {
                1.0
            }
        }
        None => 1.0,
    };

    let step = state.step + 1;
    let lr = cfg.lr_at(state.step);
    let bc1 = 1.0 - cfg.beta1.powi(step as i32);
    let bc2 = 1.0 - cfg.beta2.powi(step as i32);

    let mut new_params = Vec::with_capacity(params.len());
    let mut new_m = Vec::with_capacity(params.len());
    let mut new_v = Vec::with_capacity(params.len());
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        let mut m = state.m[i].clone();
        let mut v = state.v[i].clone();
        let mut theta = p.clone();
        for j in 0..p.len() {
            let gj = g.data[j] * clip;
            m.data[j] = cfg.beta1 * m.data[j] + (1.0 - cfg.beta1) * gj;
            v.data[j] = cfg.beta2 * v.data[j] + (1.0 - cfg.beta2) * gj * gj;
            let m_hat = m.data[j] / bc1;
            let v_hat = v.data[j] / bc2;
            let t = theta.data[j];
            theta.data[j] = t - lr * (m_hat / (v_hat.sqrt() + cfg.eps) + cfg.weight_decay * t);
        }
        if !theta.is_finite() {
            return Err(AmdetError::non_finite(format!("adamw update of tensor {i}")));
        }
        new_params.push(theta);
        new_m.push(m);
        new_v.push(v);
    }

    params.clone_from_slice(&new_params);
    state.m = new_m;
    state.v = new_v;
    state.step = step;
    Ok(())
}
