use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::attribution::{CamMode, ClassConditioning, FrameWeighting};
use crate::data::SynthSpec;
use crate::engine::AdamWConfig;
use crate::error::{AmdetError, Result};
use crate::model::ModelConfig;
use crate::signal::PreprocessConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Samples are shuffled individually.
    #[default]
    Segment,
    /// Whole trials go to one fold.
    Trial,
}

impl SplitMode {
    pub fn name(&self) -> &'static str {
        match self {
            SplitMode::Segment => "segment",
            SplitMode::Trial => "trial",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttributionConfig {
    pub conditioning: ClassConditioning,
    pub frame_weighting: FrameWeighting,
    pub cam: CamMode,
    /// Sizes of the `topk_<k>.json` lists written by `attribute`.
    pub top_k: Vec<usize>,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        AttributionConfig {
            conditioning: ClassConditioning::TrueClass,
            frame_weighting: FrameWeighting::Uniform,
            cam: CamMode::Elementwise,
            top_k: vec![4, 8],
        }
    }
}

/// Everything a CLI command can read, one JSON document.
///
/// `model.channels`, `model.bands`, `model.frames` and `model.classes` are
/// overwritten from the feature set at training time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Feature set (`FEAT v1`) used by training commands.
    pub dataset: Option<PathBuf>,
    /// Recording (`EEGR v1`) read by `preprocess` and written by `synth`.
    pub recording: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub model: ModelConfig,
    pub optimizer: AdamWConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub folds: usize,
    pub split: SplitMode,
    pub seed: u64,
    /// Stop a fold early once its training accuracy reaches this value.
    pub stop_at_train_accuracy: Option<f64>,
    /// Record training-set accuracy after every epoch.
    pub track_train_accuracy: bool,
    pub synth: SynthSpec,
    pub preprocess: PreprocessConfig,
    pub attribution: AttributionConfig,
    /// Channel counts evaluated by `reduce-channels`; empty means `C` down to
    /// 2 with a stride of 4.
    pub sweep_ks: Vec<usize>,
    /// Ranking consumed by `reduce-channels` (a `topk_<k>.json` or
    /// `channel_report.json`).
    pub ranking: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: None,
            recording: None,
            output_dir: PathBuf::from("out"),
            model: ModelConfig::default(),
            optimizer: AdamWConfig::default(),
            epochs: 100,
            batch_size: 16,
            folds: 5,
            split: SplitMode::Segment,
            seed: 0,
            stop_at_train_accuracy: None,
            track_train_accuracy: false,
            synth: SynthSpec::default(),
            preprocess: PreprocessConfig::default(),
            attribution: AttributionConfig::default(),
            sweep_ks: Vec::new(),
            ranking: None,
            checkpoint: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(AmdetError::invalid("folds", "at least two folds required"));
        }
        if self.epochs == 0 {
            return Err(AmdetError::invalid("epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(AmdetError::invalid("batch_size", "must be at least 1"));
        }
        if let Some(a) = self.stop_at_train_accuracy {
            if !(0.0..=1.0).contains(&a) {
                return Err(AmdetError::invalid("stop_at_train_accuracy", "must lie in [0, 1]"));
            }
        }
        self.optimizer.validate()
    }

    /// Reads `path` (if any) and applies `key=value` overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut doc = match path {
            Some(p) => {
                let text = fs::read(p).map_err(|e| AmdetError::io(p, e))?;
                serde_json::from_slice::<Value>(&text).map_err(|e| AmdetError::json(p, e))?
            }
            None => serde_json::to_value(ExperimentConfig::default()).expect("default config serializes"),
        };
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: ExperimentConfig = serde_json::from_value(doc)
            .map_err(|e| AmdetError::invalid("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn dataset_path(&self) -> Result<&Path> {
        self.dataset
            .as_deref()
            .ok_or_else(|| AmdetError::invalid("dataset", "no feature set given (set `dataset`)"))
    }

    pub fn recording_path(&self) -> Result<&Path> {
        self.recording
            .as_deref()
            .ok_or_else(|| AmdetError::invalid("recording", "no recording given (set `recording`)"))
    }
}

/// `a.b.c=value`: the value is parsed as JSON when possible, otherwise taken
/// as a string. Missing intermediate objects are created.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| AmdetError::invalid("--set", format!("{assignment:?} is not key=value")))?;
    if key.is_empty() {
        return Err(AmdetError::invalid("--set", "empty key"));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        let map = match node {
            Value::Object(m) => m,
            Value::Null => {
                *node = Value::Object(Default::default());
                node.as_object_mut().unwrap()
            }
            _ => {
                return Err(AmdetError::invalid(
                    "--set",
                    format!("{key}: {} is not an object", parts[..i].join(".")),
                ))
            }
        };
        if last {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map.entry(part.to_string()).or_insert(Value::Null);
    }
    unreachable!("split always yields at least one part")
}
