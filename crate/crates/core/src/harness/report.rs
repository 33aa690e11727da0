//! Report types and their JSON/CSV files.
//!
//! CSV headers:
//! - `loss.csv`: `fold,epoch,train_loss`
//! - `channel_scores.csv`: `channel_name,score,rank` (rank 1 is most important)
//! - `sweep.csv`: `k,mean_accuracy,std_accuracy`

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::attribution::ChannelReport;
use crate::error::{AmdetError, Result};
use crate::model::{Block, ModelConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_count: usize,
    pub test_count: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub confusion: Vec<Vec<usize>>,
    /// Mean training loss per epoch.
    pub loss_curve: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub train_accuracy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// `null` for the full model, otherwise the removed block.
    pub ablation: Option<Block>,
    pub split_mode: String,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub n_samples: usize,
    pub model: ModelConfig,
    pub folds: Vec<FoldReport>,
    pub mean_accuracy: f64,
    /// Population standard deviation over folds.
    pub std_accuracy: f64,
    pub mean_macro_f1: f64,
    /// Sum of the fold confusion matrices, `[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub params: usize,
    pub macs: u64,
    pub flops: u64,
    pub mlp: String,
    pub wall_time_seconds: f64,
}

pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl RunReport {
    pub(crate) fn new(
        ablation: Option<Block>,
        cfg: &ExperimentConfig,
        model: &ModelConfig,
        n_samples: usize,
        folds: Vec<FoldReport>,
        counts: CountReport,
        wall_time_seconds: f64,
    ) -> Self {
        let accs: Vec<f64> = folds.iter().map(|f| f.accuracy).collect();
        let (mean_accuracy, std_accuracy) = mean_std(&accs);
        let mean_macro_f1 = folds.iter().map(|f| f.macro_f1).sum::<f64>() / folds.len() as f64;
        let k = model.classes;
        let mut confusion = vec![vec![0; k]; k];
        for f in &folds {
            for (r, row) in f.confusion.iter().enumerate() {
                for (c, v) in row.iter().enumerate() {
                    confusion[r][c] += v;
                }
            }
        }
        RunReport {
            ablation,
            split_mode: cfg.split.name().to_string(),
            seed: cfg.seed,
            epochs: cfg.epochs,
            batch_size: cfg.batch_size,
            n_samples,
            model: model.clone(),
            folds,
            mean_accuracy,
            std_accuracy,
            mean_macro_f1,
            confusion,
            params: counts.params,
            macs: counts.macs,
            flops: counts.flops,
            mlp: counts.mlp,
            wall_time_seconds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountReport {
    pub channels: usize,
    pub bands: usize,
    pub frames: usize,
    pub classes: usize,
    pub params: usize,
    pub params_by_block: BTreeMap<String, usize>,
    /// Multiply-accumulates of every matrix product in one forward pass.
    pub macs: u64,
    /// `2 × macs`.
    pub flops: u64,
    pub mlp: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub fold_accuracies: Vec<f64>,
    pub channels: Vec<String>,
    pub params: usize,
    pub flops: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub split_mode: String,
    pub rows: Vec<SweepRow>,
}

/// Contents of `topk_<k>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopK {
    pub k: usize,
    pub channels: Vec<String>,
    pub indices: Vec<usize>,
    /// Full ranking, so the file alone can drive a sweep.
    pub ranking: Vec<usize>,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| AmdetError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| AmdetError::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| AmdetError::json(path, e))?;
    write_text(path, &text)
}

pub fn write_report(path: impl AsRef<Path>, report: &RunReport) -> Result<()> {
    write_json(path.as_ref(), report)
}

pub fn write_count(path: impl AsRef<Path>, report: &CountReport) -> Result<()> {
    write_json(path.as_ref(), report)
}

pub fn write_loss_csv(path: impl AsRef<Path>, report: &RunReport) -> Result<()> {
    let mut s = String::from("fold,epoch,train_loss\n");
    for f in &report.folds {
        for (e, l) in f.loss_curve.iter().enumerate() {
            writeln!(s, "{},{},{}", f.fold, e + 1, l).unwrap();
        }
    }
    write_text(path.as_ref(), &s)
}

pub fn write_channel_scores(path: impl AsRef<Path>, report: &ChannelReport) -> Result<()> {
    let mut s = String::from("channel_name,score,rank\n");
    for (rank, &c) in report.ranking.iter().enumerate() {
        writeln!(s, "{},{},{}", report.channels[c], report.scores[c], rank + 1).unwrap();
    }
    write_text(path.as_ref(), &s)
}

pub fn write_topk(dir: impl AsRef<Path>, report: &ChannelReport, k: usize) -> Result<TopK> {
    let k = k.min(report.ranking.len());
    let top = TopK {
        k,
        channels: report.top(k).iter().map(|&c| report.channels[c].clone()).collect(),
        indices: report.top(k).to_vec(),
        ranking: report.ranking.clone(),
    };
    write_json(&dir.as_ref().join(format!("topk_{k}.json")), &top)?;
    Ok(top)
}

pub fn write_sweep_csv(path: impl AsRef<Path>, sweep: &SweepReport) -> Result<()> {
    let mut s = String::from("k,mean_accuracy,std_accuracy\n");
    for r in &sweep.rows {
        writeln!(s, "{},{},{}", r.k, r.mean_accuracy, r.std_accuracy).unwrap();
    }
    write_text(path.as_ref(), &s)
}
