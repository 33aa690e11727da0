//! `EEGR v1` recordings and `FEAT v1` feature sets.
//!
//! Both formats are a JSON manifest `name.json` next to a flat little-endian
//! `f32` payload `name.f32`. Manifests are validated completely before the
//! payload is touched.
//!
//! Recording payloads are channel-major (all of channel 0, then channel 1, ...).
//! Feature payloads are sample-major, then `[frame][feature][channel]`; each
//! sample entry records its byte offset into the payload.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{AmdetError, Result};
use crate::signal::{BandSpec, FeatureSet, RawRecording, SampleMeta, SampleTensor, Trial};

pub const RECORDING_VERSION: u64 = 1;
pub const FEATURES_VERSION: u64 = 1;
const DTYPE: &str = "f32le";

fn default_dtype() -> String {
    DTYPE.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingManifest {
    pub version: u64,
    pub sample_rate_hz: f64,
    pub channels: Vec<String>,
    #[serde(default = "default_dtype")]
    pub dtype: String,
    /// Samples per channel; derived from the payload size when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    pub trials: Vec<Trial>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub offset: u64,
    pub label: usize,
    pub meta: SampleMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub version: u64,
    pub shape: [usize; 3],
    pub bands: Vec<BandSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<Vec<String>>,
    #[serde(default = "default_dtype")]
    pub dtype: String,
    pub samples: Vec<SampleEntry>,
}

/// `name`, `name.json` or `name.f32` all resolve to the same pair of files.
fn paths(path: &Path) -> (PathBuf, PathBuf) {
    (path.with_extension("json"), path.with_extension("f32"))
}

fn manifest_err(format: &'static str, field: impl Into<String>, reason: impl Into<String>) -> AmdetError {
    AmdetError::Manifest {
        format,
        field: field.into(),
        reason: reason.into(),
    }
}

fn check_header(format: &'static str, version: u64, expected: u64, dtype: &str) -> Result<()> {
    if version != expected {
        return Err(AmdetError::Version {
            format,
            found: version,
            expected,
        });
    }
    if dtype != DTYPE {
        return Err(manifest_err(format, "dtype", format!("unsupported {dtype:?}, expected {DTYPE:?}")));
    }
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read(path).map_err(|e| AmdetError::io(path, e))?;
    serde_json::from_slice(&text).map_err(|e| AmdetError::json(path, e))
}

fn write_pair(json_path: &Path, manifest: &impl Serialize, payload_path: &Path, payload: &[u8]) -> Result<()> {
    if let Some(dir) = json_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| AmdetError::io(dir, e))?;
    }
    let text = serde_json::to_vec_pretty(manifest).map_err(|e| AmdetError::json(json_path, e))?;
    fs::write(json_path, text).map_err(|e| AmdetError::io(json_path, e))?;
    fs::write(payload_path, payload).map_err(|e| AmdetError::io(payload_path, e))
}

fn decode_f32(bytes: &[u8]) -> impl Iterator<Item = f32> + '_ {
    bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
}

pub fn write_recording(path: impl AsRef<Path>, rec: &RawRecording) -> Result<()> {
    rec.validate()?;
    let (json, bin) = paths(path.as_ref());
    let manifest = RecordingManifest {
        version: RECORDING_VERSION,
        sample_rate_hz: rec.sample_rate_hz,
        channels: rec.channels.clone(),
        dtype: default_dtype(),
        n_samples: Some(rec.n_samples),
        subject: rec.subject.clone(),
        trials: rec.trials.clone(),
    };
    let payload: Vec<u8> = rec.data.iter().flat_map(|v| v.to_le_bytes()).collect();
    write_pair(&json, &manifest, &bin, &payload)
}

pub fn read_recording(path: impl AsRef<Path>) -> Result<RawRecording> {
    const FORMAT: &str = "EEGR";
    let (json, bin) = paths(path.as_ref());
    let m: RecordingManifest = read_json(&json)?;
    check_header(FORMAT, m.version, RECORDING_VERSION, &m.dtype)?;
    if m.channels.is_empty() {
        return Err(manifest_err(FORMAT, "channels", "empty channel list"));
    }
    if let Some(n) = m.n_samples {
        for (i, t) in m.trials.iter().enumerate() {
            if t.end > n || t.baseline_end.is_some_and(|e| e > n) {
                return Err(manifest_err(FORMAT, format!("trials[{i}]"), format!("extends past n_samples = {n}")));
            }
        }
    }
    let bytes = fs::read(&bin).map_err(|e| AmdetError::io(&bin, e))?;
    let c = m.channels.len() as u64;
    let n_samples = match m.n_samples {
        Some(n) => n as u64,
        None if bytes.len() as u64 % (4 * c) == 0 => bytes.len() as u64 / (4 * c),
        None => {
            return Err(AmdetError::PayloadLength {
                format: FORMAT,
                expected: (bytes.len() as u64 / (4 * c)) * 4 * c,
                actual: bytes.len() as u64,
            })
        }
    };
    let expected = 4 * c * n_samples;
    if bytes.len() as u64 != expected {
        return Err(AmdetError::PayloadLength {
            format: FORMAT,
            expected,
            actual: bytes.len() as u64,
        });
    }
    let data: Vec<f32> = decode_f32(&bytes).collect();
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        let n = n_samples as usize;
        return Err(AmdetError::non_finite(format!(
            "EEGR payload channel {:?} sample {}",
            m.channels[i / n],
            i % n
        )));
    }
    let mut rec = RawRecording::new(m.sample_rate_hz, m.channels, data, m.trials)?;
    rec.subject = m.subject;
    Ok(rec)
}

pub fn write_features(path: impl AsRef<Path>, set: &FeatureSet) -> Result<()> {
    set.validate()?;
    let (json, bin) = paths(path.as_ref());
    let stride = 4 * (set.frames * set.features * set.n_channels()) as u64;
    let manifest = FeatureManifest {
        version: FEATURES_VERSION,
        shape: set.shape(),
        bands: set.bands.clone(),
        channels: Some(set.channels.clone()),
        dtype: default_dtype(),
        samples: set
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| SampleEntry {
                offset: i as u64 * stride,
                label: s.label,
                meta: s.meta.clone(),
            })
            .collect(),
    };
    let mut payload = Vec::with_capacity(stride as usize * set.len());
    for s in &set.samples {
        payload.extend(s.values.iter().flat_map(|&v| (v as f32).to_le_bytes()));
    }
    write_pair(&json, &manifest, &bin, &payload)
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureSet> {
    const FORMAT: &str = "FEAT";
    let (json, bin) = paths(path.as_ref());
    let m: FeatureManifest = read_json(&json)?;
    check_header(FORMAT, m.version, FEATURES_VERSION, &m.dtype)?;
    let [frames, features, c] = m.shape;
    if frames == 0 || features == 0 || c == 0 {
        return Err(manifest_err(FORMAT, "shape", format!("{:?} has an empty axis", m.shape)));
    }
    if features != 2 * m.bands.len() {
        return Err(manifest_err(
            FORMAT,
            "shape",
            format!("feature axis {features} does not match 2 × {} bands", m.bands.len()),
        ));
    }
    let channels = m.channels.clone().unwrap_or_else(|| crate::data::channel_names(c));
    if channels.len() != c {
        return Err(manifest_err(FORMAT, "channels", format!("{} names for {c} channels", channels.len())));
    }
    let stride = 4 * (frames * features * c) as u64;
    let expected = stride * m.samples.len() as u64;
    for (i, s) in m.samples.iter().enumerate() {
        if s.offset % 4 != 0 || s.offset + stride > expected {
            return Err(manifest_err(
                FORMAT,
                format!("samples[{i}].offset"),
                format!("{} not a valid sample start in a {expected}-byte payload", s.offset),
            ));
        }
    }
    let bytes = fs::read(&bin).map_err(|e| AmdetError::io(&bin, e))?;
    if bytes.len() as u64 != expected {
        return Err(AmdetError::PayloadLength {
            format: FORMAT,
            expected,
            actual: bytes.len() as u64,
        });
    }
    let mut samples = Vec::with_capacity(m.samples.len());
    for (i, e) in m.samples.into_iter().enumerate() {
        let start = e.offset as usize;
        let values: Vec<f64> = decode_f32(&bytes[start..start + stride as usize]).map(f64::from).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(AmdetError::non_finite(format!("FEAT payload sample {i}")));
        }
        let mut s = SampleTensor::zeros(frames, features, c, e.label, e.meta);
        s.values = values;
        samples.push(s);
    }
    let set = FeatureSet {
        frames,
        features,
        channels,
        bands: m.bands,
        samples,
    };
    set.validate()?;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, SynthSpec};
    use crate::signal::{preprocess, PreprocessConfig};

    fn small_recording() -> RawRecording {
        let mut rec = synth_generate(&SynthSpec {
            channels: 4,
            n_classes: 2,
            trials_per_class: 2,
            trial_seconds: 3.0,
            baseline_seconds: 1.0,
            ..SynthSpec::band_planted(2, 4, &[0], 3.0, 9)
        })
        .unwrap();
        rec.subject = Some("s01".into());
        rec.trials[1].rating = Some(6.5);
        rec
    }

    #[test]
    fn recording_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let rec = small_recording();
        write_recording(dir.path().join("rec"), &rec).unwrap();
        let back = read_recording(dir.path().join("rec.json")).unwrap();
        assert_eq!(back, rec);
    }

    #[test]
    fn truncated_recording_payload_reports_byte_counts() {
        let dir = tempfile::tempdir().unwrap();
        let rec = small_recording();
        let base = dir.path().join("rec");
        write_recording(&base, &rec).unwrap();
        let bin = base.with_extension("f32");
        let bytes = fs::read(&bin).unwrap();
        fs::write(&bin, &bytes[..bytes.len() - 6]).unwrap();
        let err = read_recording(&base).unwrap_err();
        let expected = bytes.len() as u64;
        assert!(
            matches!(err, AmdetError::PayloadLength { expected: e, actual: a, .. } if e == expected && a == expected - 6),
            "{err}"
        );
        assert!(err.to_string().contains("payload length"));
    }

    #[test]
    fn recording_manifest_errors_name_the_field() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("rec");
        write_recording(&base, &small_recording()).unwrap();
        let json = base.with_extension("json");
        let text = fs::read_to_string(&json).unwrap();
        let mut m: RecordingManifest = serde_json::from_str(&text).unwrap();

        m.version = 2;
        fs::write(&json, serde_json::to_vec(&m).unwrap()).unwrap();
        assert!(matches!(read_recording(&base), Err(AmdetError::Version { found: 2, .. })));

        m.version = 1;
        m.trials[0].end = m.n_samples.unwrap() + 1;
        fs::write(&json, serde_json::to_vec(&m).unwrap()).unwrap();
        let err = read_recording(&base).unwrap_err();
        assert!(err.to_string().contains("trials[0]"), "{err}");
    }

    #[test]
    fn nan_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("rec");
        let mut rec = small_recording();
        rec.data[rec.n_samples + 3] = f32::NAN;
        write_recording(&base, &rec).unwrap();
        let err = read_recording(&base).unwrap_err();
        assert!(matches!(err, AmdetError::NonFinite { .. }));
        assert!(err.to_string().contains("ch01"), "{err}");
    }

    #[test]
    fn features_round_trip_at_f32_precision() {
        let dir = tempfile::tempdir().unwrap();
        let rec = small_recording();
        let mut set = preprocess(
            &rec,
            &PreprocessConfig {
                bands: BandSpec::four_bands(),
                ..Default::default()
            },
        )
        .unwrap();
        for s in &mut set.samples {
            for v in &mut s.values {
                *v = f64::from(*v as f32);
            }
        }
        write_features(dir.path().join("feat"), &set).unwrap();
        let back = read_features(dir.path().join("feat")).unwrap();
        assert_eq!(back, set);

        let bin = dir.path().join("feat.f32");
        let bytes = fs::read(&bin).unwrap();
        fs::write(&bin, &bytes[4..]).unwrap();
        assert!(matches!(
            read_features(dir.path().join("feat")),
            Err(AmdetError::PayloadLength { .. })
        ));
    }

    #[test]
    fn seed_like_fixture_has_62_channels() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            trials_per_class: 1,
            trial_seconds: 3.0,
            ..SynthSpec::seed_like(0)
        };
        let rec = synth_generate(&spec).unwrap();
        write_recording(dir.path().join("seed"), &rec).unwrap();
        let back = read_recording(dir.path().join("seed")).unwrap();
        assert_eq!(back.n_channels(), 62);
        let set = preprocess(&back, &PreprocessConfig::default()).unwrap();
        assert_eq!(set.shape(), [6, 10, 62]);
    }
}
