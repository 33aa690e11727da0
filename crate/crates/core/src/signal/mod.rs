//! Raw multichannel EEG to normalized `[frames × 2f × C]` feature tensors.
//!
//! The pipeline is: cut each trial into non-overlapping samples, cut each
//! sample into non-overlapping frames, split every frame of every channel into
//! frequency bands, and take DE and PSD per band. Optional baseline
//! subtraction and per-sample z-scoring follow.

mod band;
mod features;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{AmdetError, Result};

pub use band::{band_component, BandDecomposer};
pub use features::{
    baseline_features, baseline_subtract, build_tensor, de, psd, zscore, BaselineFeatures,
    DE_VARIANCE_FLOOR, ZSCORE_STD_FLOOR,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub name: String,
    pub lo_hz: f64,
    pub hi_hz: f64,
}

impl BandSpec {
    pub fn new(name: impl Into<String>, lo_hz: f64, hi_hz: f64) -> Result<Self> {
        let band = BandSpec {
            name: name.into(),
            lo_hz,
            hi_hz,
        };
        band.validate()?;
        Ok(band)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo_hz.is_finite() && self.hi_hz.is_finite() && self.lo_hz >= 0.0) {
            return Err(AmdetError::invalid(
                format!("band {}", self.name),
                "edges must be finite and non-negative",
            ));
        }
        if self.lo_hz >= self.hi_hz {
            return Err(AmdetError::invalid(
                format!("band {}", self.name),
                format!("lo_hz {} must be below hi_hz {}", self.lo_hz, self.hi_hz),
            ));
        }
        Ok(())
    }

    pub fn theta() -> Self {
        BandSpec::new("theta", 4.0, 8.0).unwrap()
    }
    pub fn alpha() -> Self {
        BandSpec::new("alpha", 8.0, 14.0).unwrap()
    }
    pub fn beta() -> Self {
        BandSpec::new("beta", 14.0, 31.0).unwrap()
    }
    pub fn gamma1() -> Self {
        BandSpec::new("gamma1", 31.0, 50.0).unwrap()
    }
    pub fn gamma2() -> Self {
        BandSpec::new("gamma2", 50.0, 75.0).unwrap()
    }

    /// theta, alpha, beta, gamma1.
    pub fn four_bands() -> Vec<Self> {
        vec![Self::theta(), Self::alpha(), Self::beta(), Self::gamma1()]
    }

    /// theta, alpha, beta, gamma1, gamma2.
    pub fn five_bands() -> Vec<Self> {
        let mut b = Self::four_bands();
        b.push(Self::gamma2());
        b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub start: usize,
    pub end: usize,
    pub label: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_start: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_end: Option<usize>,
    /// Continuous self-assessment score, when the source provides one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rating: Option<f64>,
}

impl Trial {
    pub fn new(start: usize, end: usize, label: usize) -> Self {
        Trial {
            start,
            end,
            label,
            baseline_start: None,
            baseline_end: None,
            rating: None,
        }
    }

    pub fn with_baseline(mut self, start: usize, end: usize) -> Self {
        self.baseline_start = Some(start);
        self.baseline_end = Some(end);
        self
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn baseline(&self) -> Option<(usize, usize)> {
        self.baseline_start.zip(self.baseline_end)
    }
}

/// Multichannel recording, channel-major `C × n_samples` in 32-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecording {
    pub sample_rate_hz: f64,
    pub channels: Vec<String>,
    pub n_samples: usize,
    pub data: Vec<f32>,
    pub trials: Vec<Trial>,
    pub subject: Option<String>,
}

impl RawRecording {
    pub fn new(
        sample_rate_hz: f64,
        channels: Vec<String>,
        data: Vec<f32>,
        trials: Vec<Trial>,
    ) -> Result<Self> {
        let n_samples = if channels.is_empty() {
            0
        } else {
            data.len() / channels.len()
        };
        let rec = RawRecording {
            sample_rate_hz,
            channels,
            n_samples,
            data,
            trials,
            subject: None,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(AmdetError::invalid("sample_rate_hz", "must be positive"));
        }
        if self.channels.is_empty() {
            return Err(AmdetError::invalid("channels", "at least one channel required"));
        }
        let mut seen = HashSet::new();
        for name in &self.channels {
            if !seen.insert(name.as_str()) {
                return Err(AmdetError::invalid("channels", format!("duplicate name {name:?}")));
            }
        }
        if self.data.len() != self.channels.len() * self.n_samples {
            return Err(AmdetError::shape(
                "recording data",
                self.channels.len() * self.n_samples,
                self.data.len(),
            ));
        }
        for (i, t) in self.trials.iter().enumerate() {
            if t.start >= t.end || t.end > self.n_samples {
                return Err(AmdetError::invalid(
                    format!("trials[{i}]"),
                    format!("range {}..{} outside 0..{}", t.start, t.end, self.n_samples),
                ));
            }
            match (t.baseline_start, t.baseline_end) {
                (None, None) => {}
                (Some(s), Some(e)) if s < e && e <= self.n_samples => {}
                _ => {
                    return Err(AmdetError::invalid(
                        format!("trials[{i}].baseline"),
                        "baseline_start/baseline_end must both be set and lie in range",
                    ))
                }
            }
        }
        Ok(())
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        &self.data[c * self.n_samples..(c + 1) * self.n_samples]
    }

    /// Relabels every trial carrying a rating as `rating > threshold`.
    pub fn binarize_ratings(&mut self, threshold: f64) -> Result<()> {
        for (i, t) in self.trials.iter_mut().enumerate() {
            let r = t.rating.ok_or_else(|| {
                AmdetError::invalid(format!("trials[{i}].rating"), "missing rating")
            })?;
            t.label = usize::from(r > threshold);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub sample_seconds: f64,
    pub frame_seconds: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            sample_seconds: 3.0,
            frame_seconds: 0.5,
        }
    }
}

impl WindowConfig {
    /// `(frame_len, frames_per_sample)` in samples at `sample_rate_hz`.
    pub fn resolve(&self, sample_rate_hz: f64) -> Result<(usize, usize)> {
        let ratio = self.sample_seconds / self.frame_seconds;
        let frames = ratio.round();
        if !(self.frame_seconds > 0.0 && frames >= 1.0 && (ratio - frames).abs() < 1e-9) {
            return Err(AmdetError::invalid(
                "sample_seconds",
                format!(
                    "{} s is not an integer multiple of the {} s frame",
                    self.sample_seconds, self.frame_seconds
                ),
            ));
        }
        let frame_samples = self.frame_seconds * sample_rate_hz;
        let frame_len = frame_samples.round();
        if frame_len < 1.0 || (frame_samples - frame_len).abs() > 1e-6 {
            return Err(AmdetError::invalid(
                "frame_seconds",
                format!("{} s at {sample_rate_hz} Hz is not a whole number of samples", self.frame_seconds),
            ));
        }
        Ok((frame_len as usize, frames as usize))
    }
}

/// One sample's raw data, `C` channels of `n_frames · frame_len` points.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSegment {
    pub trial: usize,
    pub index: usize,
    pub label: usize,
    pub sample_rate_hz: f64,
    pub frame_len: usize,
    pub n_frames: usize,
    pub data: Vec<Vec<f64>>,
}

impl RawSegment {
    pub fn n_channels(&self) -> usize {
        self.data.len()
    }

    pub fn frame(&self, t: usize, c: usize) -> &[f64] {
        &self.data[c][t * self.frame_len..(t + 1) * self.frame_len]
    }
}

fn cut(
    rec: &RawRecording,
    start: usize,
    frame_len: usize,
    n_frames: usize,
    trial: usize,
    index: usize,
    label: usize,
) -> RawSegment {
    let len = frame_len * n_frames;
    let data = (0..rec.n_channels())
        .map(|c| rec.channel(c)[start..start + len].iter().map(|&v| f64::from(v)).collect())
        .collect();
    RawSegment {
        trial,
        index,
        label,
        sample_rate_hz: rec.sample_rate_hz,
        frame_len,
        n_frames,
        data,
    }
}

/// Non-overlapping samples of every trial; each trial's trailing remainder is dropped.
pub fn segment(rec: &RawRecording, window: &WindowConfig) -> Result<Vec<RawSegment>> {
    let (frame_len, n_frames) = window.resolve(rec.sample_rate_hz)?;
    let sample_len = frame_len * n_frames;
    let mut out = Vec::new();
    for (ti, trial) in rec.trials.iter().enumerate() {
        if trial.len() < sample_len {
            return Err(AmdetError::TrialTooShort {
                trial: ti,
                len: trial.len(),
                needed: sample_len,
            });
        }
        for k in 0..trial.len() / sample_len {
            out.push(cut(
                rec,
                trial.start + k * sample_len,
                frame_len,
                n_frames,
                ti,
                k,
                trial.label,
            ));
        }
    }
    Ok(out)
}

/// The trial's baseline interval as whole frames of `frame_len` points.
pub fn baseline_segment(rec: &RawRecording, trial: usize, frame_len: usize) -> Result<RawSegment> {
    let t = rec
        .trials
        .get(trial)
        .ok_or_else(|| AmdetError::invalid("trial", format!("index {trial} out of range")))?;
    let (s, e) = t.baseline().ok_or_else(|| {
        AmdetError::invalid(format!("trials[{trial}].baseline"), "trial has no baseline interval")
    })?;
    let n_frames = (e - s) / frame_len;
    if n_frames == 0 {
        return Err(AmdetError::invalid(
            format!("trials[{trial}].baseline"),
            format!("{} samples is shorter than one {frame_len}-sample frame", e - s),
        ));
    }
    Ok(cut(rec, s, frame_len, n_frames, trial, 0, t.label))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    #[default]
    Off,
    /// Subtract baseline DE only.
    De,
    DeAndPsd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub bands: Vec<BandSpec>,
    pub window: WindowConfig,
    pub baseline: BaselineMode,
    pub zscore: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            bands: BandSpec::five_bands(),
            window: WindowConfig::default(),
            baseline: BaselineMode::Off,
            zscore: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    pub trial: usize,
    pub segment: usize,
}

/// `[frames][features][channels]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTensor {
    pub frames: usize,
    pub features: usize,
    pub channels: usize,
    pub values: Vec<f64>,
    pub label: usize,
    pub meta: SampleMeta,
}

impl SampleTensor {
    pub fn zeros(frames: usize, features: usize, channels: usize, label: usize, meta: SampleMeta) -> Self {
        SampleTensor {
            frames,
            features,
            channels,
            values: vec![0.0; frames * features * channels],
            label,
            meta,
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.frames, self.features, self.channels]
    }

    #[inline]
    pub fn index(&self, t: usize, feat: usize, c: usize) -> usize {
        (t * self.features + feat) * self.channels + c
    }

    #[inline]
    pub fn get(&self, t: usize, feat: usize, c: usize) -> f64 {
        self.values[self.index(t, feat, c)]
    }

    #[inline]
    pub fn set(&mut self, t: usize, feat: usize, c: usize, v: f64) {
        let i = self.index(t, feat, c);
        self.values[i] = v;
    }

    /// The `features × channels` slab of frame `t`.
    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.features * self.channels;
        &self.values[t * n..(t + 1) * n]
    }
}

/// A preprocessed dataset sharing one tensor shape.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub frames: usize,
    pub features: usize,
    pub channels: Vec<String>,
    pub bands: Vec<BandSpec>,
    pub samples: Vec<SampleTensor>,
}

impl FeatureSet {
    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.frames, self.features, self.channels.len()]
    }

    pub fn n_classes(&self) -> usize {
        self.samples.iter().map(|s| s.label + 1).max().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> FeatureSet {
        FeatureSet {
            frames: self.frames,
            features: self.features,
            channels: self.channels.clone(),
            bands: self.bands.clone(),
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let shape = self.shape();
        for (i, s) in self.samples.iter().enumerate() {
            if s.shape() != shape || s.values.len() != shape.iter().product::<usize>() {
                return Err(AmdetError::shape(format!("sample {i}"), shape, s.shape()));
            }
        }
        if self.features != 2 * self.bands.len() {
            return Err(AmdetError::shape("feature axis", 2 * self.bands.len(), self.features));
        }
        Ok(())
    }
}

/// Full preprocessing of a recording.
pub fn preprocess(rec: &RawRecording, cfg: &PreprocessConfig) -> Result<FeatureSet> {
    rec.validate()?;
    if cfg.bands.is_empty() {
        return Err(AmdetError::invalid("bands", "at least one band required"));
    }
    let (frame_len, n_frames) = cfg.window.resolve(rec.sample_rate_hz)?;
    let segments = segment(rec, &cfg.window)?;
    let decomposer = BandDecomposer::new(frame_len, rec.sample_rate_hz)?;

    let mut baselines: Vec<Option<BaselineFeatures>> = vec![None; rec.trials.len()];
    if cfg.baseline != BaselineMode::Off {
        for (ti, slot) in baselines.iter_mut().enumerate() {
            let seg = baseline_segment(rec, ti, frame_len)?;
            *slot = Some(features::baseline_features_with(&decomposer, &seg, &cfg.bands)?);
        }
    }

    let mut samples = Vec::with_capacity(segments.len());
    for seg in &segments {
        let mut tensor = features::build_tensor_with(&decomposer, seg, &cfg.bands)?;
        tensor.meta.subject = rec.subject.clone();
        if let Some(base) = &baselines[seg.trial] {
            baseline_subtract(&mut tensor, base, cfg.baseline == BaselineMode::DeAndPsd)?;
        }
        if cfg.zscore {
            tensor = zscore(&tensor);
        }
        samples.push(tensor);
    }
    Ok(FeatureSet {
        frames: n_frames,
        features: 2 * cfg.bands.len(),
        channels: rec.channels.clone(),
        bands: cfg.bands.clone(),
        samples,
    })
}
