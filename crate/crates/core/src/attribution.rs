//! Gradient-weighted channel importance on the spatial block output.
//!
//! For each frame the spatial output `A_t` is `C × 2f` and `g_t` is the
//! gradient of the target logit with respect to it. Two maps are available:
//!
//! - [`CamMode::Elementwise`] keeps each channel's own gradient:
//!   `m_c = ReLU(Σ_j g_t[c, j] A_t[c, j])`, the channel's first-order
//!   contribution to the target logit.
//! - [`CamMode::FeatureMaps`] treats channels as locations and the `2f`
//!   features as feature maps: `α_j = mean_c g_t[c, j]`, and
//!   `m_c = ReLU(Σ_j α_j A_t[c, j])`.
//! - [`CamMode::ChannelMean`] weights each channel by the feature-mean of its
//!   own gradient row: `m_c = ReLU(mean_j g_t[c, j] · mean_j A_t[c, j])`.
//!
//! A channel's score is the mean of its map over frames, optionally weighted
//! by the temporal attention.

use serde::{Deserialize, Serialize};

use crate::error::{AmdetError, Result};
use crate::model::Amdet;
use crate::signal::{FeatureSet, SampleTensor};
use crate::tensor::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameWeighting {
    #[default]
    Uniform,
    /// Weight frames by the model's temporal attention.
    Temporal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CamMode {
    #[default]
    Elementwise,
    FeatureMaps,
    ChannelMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassConditioning {
    #[default]
    TrueClass,
    Predicted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub n_samples: usize,
    pub conditioning: ClassConditioning,
    pub frame_weighting: FrameWeighting,
    pub cam: CamMode,
    /// How per-sample maps were combined.
    pub aggregation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelReport {
    pub channels: Vec<String>,
    pub scores: Vec<f64>,
    /// Channel indices, highest score first.
    pub ranking: Vec<usize>,
    pub provenance: Provenance,
}

impl ChannelReport {
    pub fn top(&self, k: usize) -> &[usize] {
        &self.ranking[..k.min(self.ranking.len())]
    }

    pub fn rank_of(&self, channel: usize) -> Option<usize> {
        self.ranking.iter().position(|&c| c == channel)
    }
}

/// Per-channel scores of one sample for `target` class.
pub fn grad_cam_channels(
    model: &Amdet,
    sample: &SampleTensor,
    target: usize,
    weighting: FrameWeighting,
    cam: CamMode,
) -> Result<Vec<f64>> {
    let cfg = &model.config;
    if target >= cfg.classes {
        return Err(AmdetError::invalid("target_class", format!("{target} outside 0..{}", cfg.classes)));
    }
    let mut g = model.graph();
    let trace = g.forward(cfg, sample)?;
    let mut seed = Mat::zeros(1, cfg.classes);
    seed.data[target] = 1.0;
    let grads = g.tape.backward_from(trace.logits, seed)?;
    let frame_weights: Vec<f64> = match weighting {
        FrameWeighting::Uniform => vec![1.0 / cfg.frames as f64; cfg.frames],
        FrameWeighting::Temporal => g.value(trace.temporal_weights).data.clone(),
    };
    let mut scores = vec![0.0; cfg.channels];
    for (t, &a_var) in trace.spatial.iter().enumerate() {
        let a = g.value(a_var);
        let grad = grads.get_or_zeros(&g.tape, a_var);
        if !a.is_finite() || !grad.is_finite() {
            return Err(AmdetError::non_finite(format!("spatial activations or gradients at frame {t}")));
        }
        match cam {
            CamMode::Elementwise => {
                for (c, score) in scores.iter_mut().enumerate() {
                    let m: f64 = grad.row(c).iter().zip(a.row(c)).map(|(g, v)| g * v).sum();
                    *score += frame_weights[t] * m.max(0.0);
                }
            }
            CamMode::FeatureMaps => {
                let mut alpha = vec![0.0; a.cols];
                for c in 0..a.rows {
                    for (al, g) in alpha.iter_mut().zip(grad.row(c)) {
                        *al += g / a.rows as f64;
                    }
                }
                for (c, score) in scores.iter_mut().enumerate() {
                    let m: f64 = alpha.iter().zip(a.row(c)).map(|(al, v)| al * v).sum();
                    *score += frame_weights[t] * m.max(0.0);
                }
            }
            CamMode::ChannelMean => {
                let inv = 1.0 / a.cols as f64;
                for (c, score) in scores.iter_mut().enumerate() {
                    let alpha = grad.row(c).iter().sum::<f64>() * inv;
                    let act = a.row(c).iter().sum::<f64>() * inv;
                    *score += frame_weights[t] * (alpha * act).max(0.0);
                }
            }
        }
    }
    Ok(scores)
}

/// Indices sorted by descending score, ties broken by lower index.
pub fn ranking_of(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// Mean of per-sample score vectors in input order.
pub fn rank_channels(
    channels: &[String],
    per_sample: &[Vec<f64>],
    conditioning: ClassConditioning,
    weighting: FrameWeighting,
    cam: CamMode,
) -> Result<ChannelReport> {
    if per_sample.is_empty() {
        return Err(AmdetError::invalid("reports", "no per-sample reports to aggregate"));
    }
    let c = channels.len();
    let mut scores = vec![0.0; c];
    for (i, s) in per_sample.iter().enumerate() {
        if s.len() != c {
            return Err(AmdetError::shape(format!("report {i}"), c, s.len()));
        }
        if s.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(AmdetError::invalid(format!("report {i}"), "scores must be finite and non-negative"));
        }
        for (acc, v) in scores.iter_mut().zip(s) {
            *acc += v;
        }
    }
    let n = per_sample.len() as f64;
    scores.iter_mut().for_each(|v| *v /= n);
    Ok(ChannelReport {
        channels: channels.to_vec(),
        ranking: ranking_of(&scores),
        scores,
        provenance: Provenance {
            n_samples: per_sample.len(),
            conditioning,
            frame_weighting: weighting,
            cam,
            aggregation: "mean".into(),
        },
    })
}

/// Attributes every sample of `set` and aggregates into one ranking.
pub fn attribute_dataset(
    model: &Amdet,
    set: &FeatureSet,
    conditioning: ClassConditioning,
    weighting: FrameWeighting,
    cam: CamMode,
) -> Result<ChannelReport> {
    let mut per_sample = Vec::with_capacity(set.len());
    for s in &set.samples {
        let target = match conditioning {
            ClassConditioning::TrueClass => s.label,
            ClassConditioning::Predicted => model.predict(s)?,
        };
        per_sample.push(grad_cam_channels(model, s, target, weighting, cam)?);
    }
    rank_channels(&set.channels, &per_sample, conditioning, weighting, cam)
}

/// Keeps the first `k` channels of `ranking`, in ranking order.
///
/// Returns the reduced set and, for each new channel position, the index it
/// had in `set`.
pub fn select_channels(set: &FeatureSet, ranking: &[usize], k: usize) -> Result<(FeatureSet, Vec<usize>)> {
    let c = set.n_channels();
    if ranking.len() != c {
        return Err(AmdetError::shape("ranking", c, ranking.len()));
    }
    let mut seen = vec![false; c];
    for &r in ranking {
        if r >= c || std::mem::replace(&mut seen[r], true) {
            return Err(AmdetError::invalid("ranking", "not a permutation of the channel indices"));
        }
    }
    if k == 0 || k > c {
        return Err(AmdetError::invalid("k", format!("{k} outside 1..={c}")));
    }
    let keep = ranking[..k].to_vec();
    let samples = set
        .samples
        .iter()
        .map(|s| {
            let mut out = SampleTensor::zeros(s.frames, s.features, k, s.label, s.meta.clone());
            for t in 0..s.frames {
                for f in 0..s.features {
                    for (new, &old) in keep.iter().enumerate() {
                        out.set(t, f, new, s.get(t, f, old));
                    }
                }
            }
            out
        })
        .collect();
    let reduced = FeatureSet {
        frames: set.frames,
        features: set.features,
        channels: keep.iter().map(|&i| set.channels[i].clone()).collect(),
        bands: set.bands.clone(),
        samples,
    };
    Ok((reduced, keep))
}
