//! Synthetic recordings with planted class signatures, and the on-disk
//! recording and feature formats.

mod format;

pub use format::{
    read_features, read_recording, write_features, write_recording, FeatureManifest, RecordingManifest,
    SampleEntry, FEATURES_VERSION, RECORDING_VERSION,
};

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{AmdetError, Result};
use crate::signal::{BandSpec, RawRecording, Trial};

/// A class-conditional oscillation injected on a set of channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSignal {
    pub class: usize,
    pub channels: Vec<usize>,
    pub band: BandSpec,
    /// Fixed carrier frequency; when absent each trial draws one from the
    /// middle half of the band.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency_hz: Option<f64>,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_classes: usize,
    pub channels: usize,
    pub sample_rate_hz: f64,
    pub trial_seconds: f64,
    pub trials_per_class: usize,
    pub planted: Vec<PlantedSignal>,
    /// Standard deviation of the pink background on every channel.
    pub noise: f64,
    pub seed: u64,
    /// Length of the windows inside which one burst envelope is placed.
    pub burst_window_seconds: f64,
    /// Shortest burst as a fraction of its window.
    pub burst_min_fraction: f64,
    /// Noise-only lead-in recorded before every trial as its baseline.
    pub baseline_seconds: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_classes: 3,
            channels: 16,
            sample_rate_hz: 128.0,
            trial_seconds: 12.0,
            trials_per_class: 10,
            planted: Vec::new(),
            noise: 1.0,
            seed: 0,
            burst_window_seconds: 3.0,
            burst_min_fraction: 0.5,
            baseline_seconds: 0.0,
        }
    }
}

impl SynthSpec {
    /// Class `k` carries band `k mod 4` of the four-band set on `channels`.
    pub fn band_planted(n_classes: usize, channels: usize, planted: &[usize], amplitude: f64, seed: u64) -> Self {
        let bands = BandSpec::four_bands();
        SynthSpec {
            n_classes,
            channels,
            planted: (0..n_classes)
                .map(|k| PlantedSignal {
                    class: k,
                    channels: planted.to_vec(),
                    band: bands[k % bands.len()].clone(),
                    frequency_hz: None,
                    amplitude,
                })
                .collect(),
            seed,
            ..Default::default()
        }
    }

    /// 62 channels at 200 Hz with three classes, sized like a SEED session.
    pub fn seed_like(seed: u64) -> Self {
        SynthSpec {
            sample_rate_hz: 200.0,
            ..SynthSpec::band_planted(3, 62, &[0, 1, 2], 2.0, seed)
        }
    }

    /// 32 channels at 128 Hz, two classes, with a 3 s baseline per trial.
    pub fn deap_like(seed: u64) -> Self {
        SynthSpec {
            baseline_seconds: 3.0,
            ..SynthSpec::band_planted(2, 32, &[0, 1, 2], 2.0, seed)
        }
    }

    pub fn nyquist_hz(&self) -> f64 {
        self.sample_rate_hz / 2.0
    }

    pub fn trial_len(&self) -> usize {
        (self.trial_seconds * self.sample_rate_hz).round() as usize
    }

    pub fn baseline_len(&self) -> usize {
        (self.baseline_seconds * self.sample_rate_hz).round() as usize
    }

    pub fn n_trials(&self) -> usize {
        self.n_classes * self.trials_per_class
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if self.n_classes < 2 {
            return Err(AmdetError::invalid("n_classes", "at least two classes required"));
        }
        if self.channels == 0 {
            return Err(AmdetError::invalid("channels", "must be positive"));
        }
        if !positive(self.sample_rate_hz) {
            return Err(AmdetError::invalid("sample_rate_hz", "must be positive"));
        }
        if !positive(self.trial_seconds) || self.trial_len() < 2 {
            return Err(AmdetError::invalid("trial_seconds", "must cover at least two samples"));
        }
        if self.trials_per_class == 0 {
            return Err(AmdetError::invalid("trials_per_class", "must be positive"));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(AmdetError::invalid("noise", "must be finite and non-negative"));
        }
        if !positive(self.burst_window_seconds) {
            return Err(AmdetError::invalid("burst_window_seconds", "must be positive"));
        }
        if !(self.burst_min_fraction > 0.0 && self.burst_min_fraction <= 1.0) {
            return Err(AmdetError::invalid("burst_min_fraction", "must lie in (0, 1]"));
        }
        if !(self.baseline_seconds.is_finite() && self.baseline_seconds >= 0.0) {
            return Err(AmdetError::invalid("baseline_seconds", "must be non-negative"));
        }
        for (i, p) in self.planted.iter().enumerate() {
            let field = |f: &str| format!("planted[{i}].{f}");
            if p.class >= self.n_classes {
                return Err(AmdetError::invalid(field("class"), format!("{} outside 0..{}", p.class, self.n_classes)));
            }
            if p.channels.is_empty() {
                return Err(AmdetError::invalid(field("channels"), "empty channel set"));
            }
            if let Some(&c) = p.channels.iter().find(|&&c| c >= self.channels) {
                return Err(AmdetError::invalid(field("channels"), format!("{c} outside 0..{}", self.channels)));
            }
            p.band.validate()?;
            if p.band.hi_hz > self.nyquist_hz() {
                return Err(AmdetError::BandAboveNyquist {
                    name: p.band.name.clone(),
                    lo_hz: p.band.lo_hz,
                    hi_hz: p.band.hi_hz,
                    nyquist_hz: self.nyquist_hz(),
                });
            }
            if let Some(f) = p.frequency_hz {
                if !(f >= p.band.lo_hz && f < p.band.hi_hz) {
                    return Err(AmdetError::invalid(field("frequency_hz"), format!("{f} Hz outside the band")));
                }
            }
            if !(p.amplitude.is_finite() && p.amplitude >= 0.0) {
                return Err(AmdetError::invalid(field("amplitude"), "must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

pub fn channel_names(n: usize) -> Vec<String> {
    (0..n).map(|c| format!("ch{c:02}")).collect()
}

/// Background noise with a `1/√f` amplitude spectrum, scaled to unit
/// standard deviation.
pub fn pink_noise(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    if len < 2 {
        return vec![0.0; len];
    }
    let mut buf: Vec<Complex64> = (0..len)
        .map(|_| Complex64::new(rng.sample::<f64, _>(StandardNormal), 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    buf[0] = Complex64::new(0.0, 0.0);
    for (k, b) in buf.iter_mut().enumerate().skip(1) {
        let bin = k.min(len - k) as f64;
        *b /= bin.sqrt();
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    let mut out: Vec<f64> = buf.into_iter().map(|c| c.re).collect();
    let mean = out.iter().sum::<f64>() / len as f64;
    let var = out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / len as f64;
    let scale = if var > 0.0 { 1.0 / var.sqrt() } else { 0.0 };
    for v in &mut out {
        *v = (*v - mean) * scale;
    }
    out
}

/// Raised-cosine bursts, one per window, each over a random sub-interval of at
/// least `min_fraction` of the window.
pub fn burst_envelope(rng: &mut impl Rng, len: usize, window: usize, min_fraction: f64) -> Vec<f64> {
    let mut env = vec![0.0; len];
    let window = window.max(1);
    let mut w0 = 0;
    while w0 < len {
        let w = window.min(len - w0);
        let shortest = ((min_fraction * w as f64).ceil() as usize).clamp(1, w);
        let width = rng.random_range(shortest..=w);
        let start = w0 + rng.random_range(0..=w - width);
        for i in 0..width {
            env[start + i] = 0.5 * (1.0 - (2.0 * PI * (i as f64 + 0.5) / width as f64).cos());
        }
        w0 += window;
    }
    env
}

/// Renders the recording described by `spec`.
///
/// Trial `i` has label `i mod K` and its own PRNG stream, so trials can be
/// generated independently of each other.
pub fn synth_generate(spec: &SynthSpec) -> Result<RawRecording> {
    spec.validate()?;
    let base_len = spec.baseline_len();
    let trial_len = spec.trial_len();
    let block = base_len + trial_len;
    let n_trials = spec.n_trials();
    let n = block * n_trials;
    let fs = spec.sample_rate_hz;
    let window = ((spec.burst_window_seconds * fs).round() as usize).max(1);
    let mut data = vec![0f32; spec.channels * n];
    let mut trials = Vec::with_capacity(n_trials);

    for i in 0..n_trials {
        let label = i % spec.n_classes;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64 + 1);
        let offset = i * block;
        let mut signal = vec![vec![0.0f64; block]; spec.channels];
        for row in signal.iter_mut() {
            for (dst, v) in row.iter_mut().zip(pink_noise(&mut rng, block)) {
                *dst = spec.noise * v;
            }
        }
        for p in spec.planted.iter().filter(|p| p.class == label) {
            let width = p.band.hi_hz - p.band.lo_hz;
            let freq = p
                .frequency_hz
                .unwrap_or_else(|| p.band.lo_hz + width * rng.random_range(0.25..0.75));
            let env = burst_envelope(&mut rng, trial_len, window, spec.burst_min_fraction);
            for &c in &p.channels {
                let phase = rng.random_range(0.0..2.0 * PI);
                for (s, e) in env.iter().enumerate() {
                    let t = s as f64 / fs;
                    signal[c][base_len + s] += p.amplitude * e * (2.0 * PI * freq * t + phase).sin();
                }
            }
        }
        for (c, row) in signal.iter().enumerate() {
            let dst = &mut data[c * n + offset..c * n + offset + block];
            for (d, v) in dst.iter_mut().zip(row) {
                *d = *v as f32;
            }
        }
        let mut trial = Trial::new(offset + base_len, offset + block, label);
        if base_len > 0 {
            trial = trial.with_baseline(offset, offset + base_len);
        }
        trials.push(trial);
    }
    RawRecording::new(fs, channel_names(spec.channels), data, trials)
}
