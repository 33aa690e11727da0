//! Cross-validated training, evaluation, ablation, attribution and
//! channel-reduction experiments, plus their reports.

mod config;
mod report;

pub use config::{apply_override, AttributionConfig, ExperimentConfig, SplitMode};
pub use report::{
    write_channel_scores, write_count, write_loss_csv, write_report, write_sweep_csv, write_topk, CountReport,
    FoldReport, RunReport, SweepReport, SweepRow, TopK,
};

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attribution::{grad_cam_channels, rank_channels, select_channels, ChannelReport, ClassConditioning};
use crate::engine::{adamw_step, AdamWState};
use crate::error::{AmdetError, Result};
use crate::model::{write_checkpoint, Amdet, Block, ModelConfig, ModelParams};
use crate::signal::{FeatureSet, SampleMeta, SampleTensor};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Samples with equal `(subject, trial)` belong to one trial.
fn trial_key(meta: &SampleMeta) -> (Option<&str>, usize) {
    (meta.subject.as_deref(), meta.trial)
}

fn chunk_sizes(n: usize, folds: usize) -> Vec<usize> {
    (0..folds).map(|i| n / folds + usize::from(i < n % folds)).collect()
}

/// Disjoint test folds covering `0..metas.len()`, deterministic in `seed`.
pub fn kfold_split(metas: &[&SampleMeta], folds: usize, mode: SplitMode, seed: u64) -> Result<Vec<Fold>> {
    let n = metas.len();
    if n == 0 {
        return Err(AmdetError::invalid("dataset", "no samples to split"));
    }
    if folds < 2 {
        return Err(AmdetError::invalid("folds", "at least two folds required"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tests: Vec<Vec<usize>> = Vec::with_capacity(folds);
    match mode {
        SplitMode::Segment => {
            if n < folds {
                return Err(AmdetError::invalid("folds", format!("{folds} folds for {n} samples")));
            }
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let mut start = 0;
            for size in chunk_sizes(n, folds) {
                tests.push(idx[start..start + size].to_vec());
                start += size;
            }
        }
        SplitMode::Trial => {
            let mut groups: BTreeMap<(Option<&str>, usize), Vec<usize>> = BTreeMap::new();
            for (i, m) in metas.iter().enumerate() {
                groups.entry(trial_key(m)).or_default().push(i);
            }
            if groups.len() < folds {
                return Err(AmdetError::invalid(
                    "folds",
                    format!("trial mode needs at least {folds} trials, found {}", groups.len()),
                ));
            }
            let mut keys: Vec<_> = groups.keys().cloned().collect();
            keys.shuffle(&mut rng);
            let mut start = 0;
            for size in chunk_sizes(keys.len(), folds) {
                let mut test: Vec<usize> = keys[start..start + size].iter().flat_map(|k| groups[k].clone()).collect();
                test.sort_unstable();
                tests.push(test);
                start += size;
            }
        }
    }
    let mut owner = vec![0usize; n];
    for (f, t) in tests.iter().enumerate() {
        for &i in t {
            owner[i] = f;
        }
    }
    Ok(tests
        .into_iter()
        .enumerate()
        .map(|(f, test)| Fold {
            train: (0..n).filter(|&i| owner[i] != f).collect(),
            test,
        })
        .collect())
}

/// Largest head count not above `wanted` that divides `d`.
pub fn fit_heads(d: usize, wanted: usize) -> usize {
    (1..=wanted.max(1)).rev().find(|h| d % h == 0).unwrap_or(1)
}

/// `cfg.model` with the dataset's dimensions filled in.
pub fn model_config_for(cfg: &ExperimentConfig, set: &FeatureSet) -> Result<ModelConfig> {
    if set.features % 2 != 0 {
        return Err(AmdetError::shape("feature axis", set.features + 1, set.features));
    }
    let mut m = cfg.model.clone();
    m.channels = set.n_channels();
    m.bands = set.features / 2;
    m.frames = set.frames;
    m.classes = set.n_classes().max(2);
    m.spectral_heads = fit_heads(m.channels, m.spectral_heads);
    m.spatial_heads = fit_heads(m.features(), m.spatial_heads);
    m.validate()?;
    Ok(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub macro_f1: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

pub fn evaluate(model: &Amdet, samples: &[&SampleTensor]) -> Result<Evaluation> {
    let k = model.config.classes;
    let mut confusion = vec![vec![0usize; k]; k];
    for s in samples {
        if s.label >= k {
            return Err(AmdetError::invalid("label", format!("{} outside 0..{k}", s.label)));
        }
        confusion[s.label][model.predict(s)?] += 1;
    }
    Ok(summarize(confusion))
}

fn summarize(confusion: Vec<Vec<usize>>) -> Evaluation {
    let total: usize = confusion.iter().flatten().sum();
    let correct: usize = (0..confusion.len()).map(|i| confusion[i][i]).sum();
    let accuracy = if total == 0 { 0.0 } else { correct as f64 / total as f64 };
    let k = confusion.len();
    let mut f1_sum = 0.0;
    for c in 0..k {
        let tp = confusion[c][c] as f64;
        let predicted: usize = (0..k).map(|r| confusion[r][c]).sum();
        let actual: usize = confusion[c].iter().sum();
        let denom = predicted as f64 + actual as f64;
        f1_sum += if denom == 0.0 { 0.0 } else { 2.0 * tp / denom };
    }
    Evaluation {
        accuracy,
        macro_f1: f1_sum / k.max(1) as f64,
        confusion,
    }
}

/// Result of training one model.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Amdet,
    pub loss_curve: Vec<f64>,
    pub train_accuracy: Vec<f64>,
}

/// Minibatch AdamW on `train`, shuffled every epoch.
pub fn fit(
    model_cfg: &ModelConfig,
    cfg: &ExperimentConfig,
    train: &[&SampleTensor],
    fold: usize,
) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(AmdetError::invalid("train", "empty training set"));
    }
    let mut model = Amdet::new(model_cfg.clone())?;
    let mut state = AdamWState::new(cfg.optimizer.clone(), model.params.tensors());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(fold as u64 + 1);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    let mut train_accuracy = Vec::new();
    let track = cfg.track_train_accuracy || cfg.stop_at_train_accuracy.is_some();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&SampleTensor> = chunk.iter().map(|&i| train[i]).collect();
            let (loss, grads) = model.batch_loss_and_grads(&batch).map_err(|e| match e {
                AmdetError::NonFinite { .. } => AmdetError::Diverged {
                    fold,
                    epoch,
                    loss: f64::NAN,
                },
                other => other,
            })?;
            if !loss.is_finite() {
                return Err(AmdetError::Diverged { fold, epoch, loss });
            }
            total += loss * batch.len() as f64;
            adamw_step(model.params.tensors_mut(), &grads, &mut state).map_err(|_| AmdetError::Diverged {
                fold,
                epoch,
                loss,
            })?;
        }
        loss_curve.push(total / train.len() as f64);
        if track {
            let acc = evaluate(&model, train)?.accuracy;
            train_accuracy.push(acc);
            if cfg.stop_at_train_accuracy.is_some_and(|t| acc >= t) {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        model,
        loss_curve,
        train_accuracy,
    })
}

/// Cross-validated run. Returns the report and each fold's trained model.
pub fn run_cv(cfg: &ExperimentConfig, set: &FeatureSet, ablation: Option<Block>) -> Result<(RunReport, Vec<Amdet>)> {
    cfg.validate()?;
    set.validate()?;
    let start = Instant::now();
    let model_cfg = model_config_for(cfg, set)?.with_ablation(ablation);
    let metas: Vec<&SampleMeta> = set.samples.iter().map(|s| &s.meta).collect();
    let folds = kfold_split(&metas, cfg.folds, cfg.split, cfg.seed)?;
    let mut fold_reports = Vec::with_capacity(folds.len());
    let mut models = Vec::with_capacity(folds.len());
    for (f, fold) in folds.iter().enumerate() {
        let train: Vec<&SampleTensor> = fold.train.iter().map(|&i| &set.samples[i]).collect();
        let test: Vec<&SampleTensor> = fold.test.iter().map(|&i| &set.samples[i]).collect();
        let fold_cfg = ModelConfig {
            seed: model_cfg.seed.wrapping_add(f as u64),
            ..model_cfg.clone()
        };
        let outcome = fit(&fold_cfg, cfg, &train, f)?;
        let eval = evaluate(&outcome.model, &test)?;
        fold_reports.push(FoldReport {
            fold: f,
            train_count: train.len(),
            test_count: test.len(),
            accuracy: eval.accuracy,
            macro_f1: eval.macro_f1,
            confusion: eval.confusion,
            loss_curve: outcome.loss_curve,
            train_accuracy: outcome.train_accuracy,
        });
        models.push(outcome.model);
    }
    let counts = count_params_flops(&model_cfg)?;
    let report = RunReport::new(
        ablation,
        cfg,
        &model_cfg,
        set.len(),
        fold_reports,
        counts,
        start.elapsed().as_secs_f64(),
    );
    Ok((report, models))
}

pub fn ablate(cfg: &ExperimentConfig, set: &FeatureSet, remove: Block) -> Result<RunReport> {
    run_cv(cfg, set, Some(remove)).map(|(r, _)| r)
}

/// Writes `report.json`, `loss.csv` and one checkpoint per fold.
pub fn save_run(dir: &Path, report: &RunReport, models: &[Amdet]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| AmdetError::io(dir, e))?;
    write_report(dir.join("report.json"), report)?;
    write_loss_csv(dir.join("loss.csv"), report)?;
    for (f, m) in models.iter().enumerate() {
        write_checkpoint(dir.join(format!("fold_{f}.amdw")), m)?;
    }
    Ok(())
}

/// Parameter count by enumeration and matmul work of one forward pass.
pub fn count_params_flops(model_cfg: &ModelConfig) -> Result<CountReport> {
    model_cfg.validate()?;
    let shapes = ModelParams::shapes(model_cfg);
    let params: usize = shapes.iter().map(|(_, r, c)| r * c).sum();
    let mut by_block: BTreeMap<String, usize> = BTreeMap::new();
    for (name, r, c) in &shapes {
        let block = name.split('.').next().unwrap_or("").to_string();
        *by_block.entry(block).or_default() += r * c;
    }
    let model = Amdet::new(model_cfg.clone())?;
    let sample = SampleTensor::zeros(
        model_cfg.frames,
        model_cfg.features(),
        model_cfg.channels,
        0,
        SampleMeta {
            subject: None,
            trial: 0,
            segment: 0,
        },
    );
    let mut g = model.graph();
    g.forward(model_cfg, &sample)?;
    let macs = g.tape.matmul_macs();
    Ok(CountReport {
        channels: model_cfg.channels,
        bands: model_cfg.bands,
        frames: model_cfg.frames,
        classes: model_cfg.classes,
        params,
        params_by_block: by_block,
        macs,
        flops: 2 * macs,
        mlp: model_cfg.mlp.describe(),
    })
}

/// Per-channel scores of every sample in each fold's test set, computed with
/// that fold's model, aggregated into one ranking.
pub fn attribute_cv(
    cfg: &ExperimentConfig,
    set: &FeatureSet,
    models: &[Amdet],
) -> Result<ChannelReport> {
    let metas: Vec<&SampleMeta> = set.samples.iter().map(|s| &s.meta).collect();
    let folds = kfold_split(&metas, cfg.folds, cfg.split, cfg.seed)?;
    if folds.len() != models.len() {
        return Err(AmdetError::invalid("models", format!("{} models for {} folds", models.len(), folds.len())));
    }
    let mut per_sample = Vec::with_capacity(set.len());
    for (fold, model) in folds.iter().zip(models) {
        for &i in &fold.test {
            per_sample.push(sample_scores(model, &set.samples[i], cfg)?);
        }
    }
    rank_channels(&set.channels, &per_sample, cfg.attribution.conditioning, cfg.attribution.frame_weighting, cfg.attribution.cam)
}

/// Attribution of every sample in `set` under one model.
pub fn attribute_with(cfg: &ExperimentConfig, set: &FeatureSet, model: &Amdet) -> Result<ChannelReport> {
    let per_sample = set
        .samples
        .iter()
        .map(|s| sample_scores(model, s, cfg))
        .collect::<Result<Vec<_>>>()?;
    rank_channels(&set.channels, &per_sample, cfg.attribution.conditioning, cfg.attribution.frame_weighting, cfg.attribution.cam)
}

fn sample_scores(model: &Amdet, s: &SampleTensor, cfg: &ExperimentConfig) -> Result<Vec<f64>> {
    let target = match cfg.attribution.conditioning {
        ClassConditioning::TrueClass => s.label,
        ClassConditioning::Predicted => model.predict(s)?,
    };
    grad_cam_channels(model, s, target, cfg.attribution.frame_weighting, cfg.attribution.cam)
}

/// `C, C-4, ..., ≥ 2`, the channel grid of a stride-4 reduction.
pub fn default_sweep(c: usize) -> Vec<usize> {
    let mut ks: Vec<usize> = (0..).map(|i| c.saturating_sub(4 * i)).take_while(|&k| k >= 2).collect();
    if ks.is_empty() {
        ks.push(c);
    }
    ks
}

/// Retrains from scratch on the top-`k` channels for every `k` in `ks`.
pub fn reduce_channels_sweep(
    cfg: &ExperimentConfig,
    set: &FeatureSet,
    ranking: &[usize],
    ks: &[usize],
) -> Result<SweepReport> {
    if ks.is_empty() {
        return Err(AmdetError::invalid("sweep_ks", "no channel counts given"));
    }
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let (reduced, kept) = select_channels(set, ranking, k)?;
        let (report, _) = run_cv(cfg, &reduced, None)?;
        rows.push(SweepRow {
            k,
            mean_accuracy: report.mean_accuracy,
            std_accuracy: report.std_accuracy,
            fold_accuracies: report.folds.iter().map(|f| f.accuracy).collect(),
            channels: kept.iter().map(|&i| set.channels[i].clone()).collect(),
            params: report.params,
            flops: report.flops,
        });
    }
    Ok(SweepReport {
        split_mode: cfg.split.name().to_string(),
        rows,
    })
}
