use super::{BandDecomposer, BandSpec, RawSegment, SampleMeta, SampleTensor};
use crate::error::{AmdetError, Result};

/// Variance floor inside the Gaussian DE formula.
pub const DE_VARIANCE_FLOOR: f64 = 1e-12;
pub const ZSCORE_STD_FLOOR: f64 = 1e-8;

/// Mean of squares.
pub fn psd(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(AmdetError::invalid("psd", "empty input"));
    }
    Ok(x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64)
}

/// Differential entropy of a Gaussian with the population variance of `x`.
pub fn de(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(AmdetError::invalid("de", "empty input"));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * var.max(DE_VARIANCE_FLOOR)).ln())
}

/// `[frames][DE(bands) ++ PSD(bands)][channels]` for one segment, unnormalized.
pub fn build_tensor(segment: &RawSegment, bands: &[BandSpec]) -> Result<SampleTensor> {
    let d = BandDecomposer::new(segment.frame_len, segment.sample_rate_hz)?;
    build_tensor_with(&d, segment, bands)
}

pub(crate) fn build_tensor_with(
    d: &BandDecomposer,
    segment: &RawSegment,
    bands: &[BandSpec],
) -> Result<SampleTensor> {
    let f = bands.len();
    let c_count = segment.n_channels();
    let meta = SampleMeta {
        subject: None,
        trial: segment.trial,
        segment: segment.index,
    };
    let mut out = SampleTensor::zeros(segment.n_frames, 2 * f, c_count, segment.label, meta);
    for t in 0..segment.n_frames {
        for c in 0..c_count {
            let comps = d.decompose(segment.frame(t, c), bands)?;
            for (b, comp) in comps.iter().enumerate() {
                out.set(t, b, c, de(comp)?);
                out.set(t, f + b, c, psd(comp)?);
            }
        }
    }
    if !out.values.iter().all(|v| v.is_finite()) {
        return Err(AmdetError::non_finite(format!(
            "features of trial {} segment {}",
            segment.trial, segment.index
        )));
    }
    Ok(out)
}

/// Frame-averaged per-(band, channel) features of a baseline interval, `f × C` each.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineFeatures {
    pub bands: usize,
    pub channels: usize,
    pub de: Vec<f64>,
    pub psd: Vec<f64>,
}

pub fn baseline_features(baseline: &RawSegment, bands: &[BandSpec]) -> Result<BaselineFeatures> {
    let d = BandDecomposer::new(baseline.frame_len, baseline.sample_rate_hz)?;
    baseline_features_with(&d, baseline, bands)
}

pub(crate) fn baseline_features_with(
    d: &BandDecomposer,
    baseline: &RawSegment,
    bands: &[BandSpec],
) -> Result<BaselineFeatures> {
    if baseline.n_frames == 0 {
        return Err(AmdetError::invalid("baseline", "needs at least one frame"));
    }
    let tensor = build_tensor_with(d, baseline, bands)?;
    let f = bands.len();
    let c_count = baseline.n_channels();
    let mut de_mean = vec![0.0; f * c_count];
    let mut psd_mean = vec![0.0; f * c_count];
    for t in 0..tensor.frames {
        for b in 0..f {
            for c in 0..c_count {
                de_mean[b * c_count + c] += tensor.get(t, b, c);
                psd_mean[b * c_count + c] += tensor.get(t, f + b, c);
            }
        }
    }
    let n = tensor.frames as f64;
    de_mean.iter_mut().chain(psd_mean.iter_mut()).for_each(|v| *v /= n);
    Ok(BaselineFeatures {
        bands: f,
        channels: c_count,
        de: de_mean,
        psd: psd_mean,
    })
}

/// Subtracts baseline DE (and optionally PSD) from every frame of `tensor`.
pub fn baseline_subtract(
    tensor: &mut SampleTensor,
    baseline: &BaselineFeatures,
    include_psd: bool,
) -> Result<()> {
    if baseline.channels != tensor.channels || 2 * baseline.bands != tensor.features {
        return Err(AmdetError::shape(
            "baseline features",
            (tensor.features / 2, tensor.channels),
            (baseline.bands, baseline.channels),
        ));
    }
    let f = baseline.bands;
    let c_count = baseline.channels;
    for t in 0..tensor.frames {
        for b in 0..f {
            for c in 0..c_count {
                let i = tensor.index(t, b, c);
                tensor.values[i] -= baseline.de[b * c_count + c];
                if include_psd {
                    let j = tensor.index(t, f + b, c);
                    tensor.values[j] -= baseline.psd[b * c_count + c];
                }
            }
        }
    }
    Ok(())
}

/// Joint z-score over every element of the sample.
pub fn zscore(tensor: &SampleTensor) -> SampleTensor {
    let n = tensor.values.len() as f64;
    let mean = tensor.values.iter().sum::<f64>() / n;
    let var = tensor.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt().max(ZSCORE_STD_FLOOR);
    let mut out = tensor.clone();
    for v in &mut out.values {
        *v = (*v - mean) / std;
    }
    out
}
