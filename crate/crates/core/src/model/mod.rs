//! The three-block attention classifier.
//!
//! A sample `[frames × 2f × C]` goes through a spectral encoder (tokens are the
//! `2f` feature rows, shared across frames), a spatial encoder on the
//! transposed layout (tokens are channels), soft attention over frames, and a
//! linear classifier.

mod checkpoint;
mod config;
mod forward;
mod params;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use config::{Block, MlpWidth, ModelConfig};
pub use forward::{Graph, Trace};
pub use params::ModelParams;

use crate::error::{AmdetError, Result};
use crate::signal::SampleTensor;
use crate::tensor::Mat;

/// Pre-softmax class scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits(pub Vec<f64>);

impl Logits {
    pub fn argmax(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
            .0
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let mut p = self.0.clone();
        crate::engine::softmax_in_place(&mut p);
        p
    }
}

/// Configuration and parameters together.
#[derive(Debug, Clone, PartialEq)]
pub struct Amdet {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl Amdet {
    pub fn new(config: ModelConfig) -> Result<Self> {
        let params = ModelParams::init(&config)?;
        Ok(Amdet { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: ModelParams) -> Result<Self> {
        config.validate()?;
        params.check_layout(&config)?;
        Ok(Amdet { config, params })
    }

    pub fn graph(&self) -> Graph<'_> {
        Graph::new(&self.params)
    }

    pub fn forward(&self, sample: &SampleTensor) -> Result<Logits> {
        let mut g = self.graph();
        let trace = g.forward(&self.config, sample)?;
        let logits = g.value(trace.logits);
        if !logits.is_finite() {
            return Err(AmdetError::non_finite("logits"));
        }
        Ok(Logits(logits.data.clone()))
    }

    pub fn predict(&self, sample: &SampleTensor) -> Result<usize> {
        Ok(self.forward(sample)?.argmax())
    }

    /// Cross-entropy of one sample and the gradient of every parameter.
    pub fn loss_and_grads(&self, sample: &SampleTensor) -> Result<(f64, Vec<Mat>)> {
        if sample.label >= self.config.classes {
            return Err(AmdetError::invalid(
                "label",
                format!("{} outside 0..{}", sample.label, self.config.classes),
            ));
        }
        let mut g = self.graph();
        let trace = g.forward(&self.config, sample)?;
        let loss = g.tape.cross_entropy(trace.logits, sample.label);
        let grads = g.tape.backward(loss)?;
        Ok((g.value(loss).data[0], g.param_grads(&grads)))
    }

    /// Mean loss and mean gradient over a batch, reduced in sample order.
    pub fn batch_loss_and_grads(&self, batch: &[&SampleTensor]) -> Result<(f64, Vec<Mat>)> {
        if batch.is_empty() {
            return Err(AmdetError::invalid("batch", "empty batch"));
        }
        let mut total = 0.0;
        let mut acc: Vec<Mat> = self
            .params
            .tensors()
            .iter()
            .map(|p| Mat::zeros(p.rows, p.cols))
            .collect();
        for s in batch {
            let (loss, grads) = self.loss_and_grads(s)?;
            total += loss;
            for (a, g) in acc.iter_mut().zip(&grads) {
                a.add_assign(g);
            }
        }
        let n = batch.len() as f64;
        for a in &mut acc {
            a.scale(1.0 / n);
        }
        Ok((total / n, acc))
    }

    pub fn batch_loss(&self, batch: &[&SampleTensor]) -> Result<f64> {
        let mut total = 0.0;
        for s in batch {
            let logits = self.forward(s)?;
            total += crate::engine::cross_entropy_value(&logits.0, s.label).0;
        }
        Ok(total / batch.len() as f64)
    }
}
