use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use amdet::attribution::ChannelReport;
use amdet::data::{read_features, read_recording, synth_generate, write_features, write_recording};
use amdet::harness::{
    attribute_cv, attribute_with, count_params_flops, default_sweep, evaluate, model_config_for, reduce_channels_sweep,
    run_cv, save_run, write_channel_scores, write_count, write_sweep_csv, write_topk, ExperimentConfig,
};
use amdet::model::{read_checkpoint, Block};
use amdet::signal::preprocess;
use amdet::{AmdetError, Result};

#[derive(Parser)]
#[command(name = "amdet", version, about = "EEG emotion classification with spectral, spatial and temporal attention")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration field, e.g. `--set model.mlp={"ratio":4}`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic recording (`synth.*`) into `recording`.
    Synth(Common),
    /// Turn `recording` into a feature set at `dataset`.
    Preprocess(Common),
    /// Cross-validated training on `dataset`.
    Train(Common),
    /// Evaluate `checkpoint` on `dataset`.
    Eval(Common),
    /// Cross-validated training with one block removed.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// spectral, spatial or temporal.
        #[arg(long)]
        remove: Block,
    },
    /// Rank channels by attribution.
    Attribute(Common),
    /// Retrain on the top-k channels of `ranking` for each k.
    ReduceChannels(Common),
    /// Parameter and FLOP count of `model` (dimensions from `dataset` if set).
    Count(Common),
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    ExperimentConfig::load(common.config.as_deref(), &common.overrides)
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(value).expect("report serializes"));
}

#[derive(Deserialize)]
struct RankingFile {
    ranking: Vec<usize>,
}

fn read_ranking(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read(path).map_err(|e| AmdetError::io(path, e))?;
    let f: RankingFile = serde_json::from_slice(&text).map_err(|e| AmdetError::json(path, e))?;
    Ok(f.ranking)
}

fn write_attribution(cfg: &ExperimentConfig, report: &ChannelReport) -> Result<()> {
    let dir = &cfg.output_dir;
    write_channel_scores(dir.join("channel_scores.csv"), report)?;
    let text = serde_json::to_string_pretty(report).map_err(|e| AmdetError::json(dir, e))?;
    let path = dir.join("channel_report.json");
    std::fs::write(&path, text).map_err(|e| AmdetError::io(&path, e))?;
    for &k in &cfg.attribution.top_k {
        write_topk(dir, report, k)?;
    }
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(c) => {
            let cfg = load(&c)?;
            let rec = synth_generate(&cfg.synth)?;
            write_recording(cfg.recording_path()?, &rec)?;
            eprintln!(
                "wrote {} channels × {} samples, {} trials",
                rec.n_channels(),
                rec.n_samples,
                rec.trials.len()
            );
        }
        Command::Preprocess(c) => {
            let cfg = load(&c)?;
            let rec = read_recording(cfg.recording_path()?)?;
            let set = preprocess(&rec, &cfg.preprocess)?;
            write_features(cfg.dataset_path()?, &set)?;
            eprintln!("wrote {} samples of shape {:?}", set.len(), set.shape());
        }
        Command::Train(c) => {
            let cfg = load(&c)?;
            let set = read_features(cfg.dataset_path()?)?;
            let (report, models) = run_cv(&cfg, &set, None)?;
            save_run(&cfg.output_dir, &report, &models)?;
            println!(
                "accuracy {:.4} ± {:.4} ({} folds, {} split)",
                report.mean_accuracy, report.std_accuracy, report.folds.len(), report.split_mode
            );
        }
        Command::Eval(c) => {
            let cfg = load(&c)?;
            let path = cfg
                .checkpoint
                .as_deref()
                .ok_or_else(|| AmdetError::invalid("checkpoint", "no checkpoint given (set `checkpoint`)"))?;
            let model = read_checkpoint(path)?;
            let set = read_features(cfg.dataset_path()?)?;
            let samples: Vec<_> = set.samples.iter().collect();
            let e = evaluate(&model, &samples)?;
            print_json(&serde_json::json!({
                "accuracy": e.accuracy,
                "macro_f1": e.macro_f1,
                "confusion": e.confusion,
                "n_samples": samples.len(),
            }));
        }
        Command::Ablate { common, remove } => {
            let cfg = load(&common)?;
            let set = read_features(cfg.dataset_path()?)?;
            let (report, models) = run_cv(&cfg, &set, Some(remove))?;
            save_run(&cfg.output_dir, &report, &models)?;
            println!(
                "without {}: accuracy {:.4} ± {:.4}",
                remove.name(),
                report.mean_accuracy,
                report.std_accuracy
            );
        }
        Command::Attribute(c) => {
            let cfg = load(&c)?;
            let set = read_features(cfg.dataset_path()?)?;
            let report = match &cfg.checkpoint {
                Some(p) => attribute_with(&cfg, &set, &read_checkpoint(p)?)?,
                None => {
                    let (run, models) = run_cv(&cfg, &set, None)?;
                    save_run(&cfg.output_dir, &run, &models)?;
                    attribute_cv(&cfg, &set, &models)?
                }
            };
            write_attribution(&cfg, &report)?;
            let top: Vec<&str> = report.top(8).iter().map(|&i| report.channels[i].as_str()).collect();
            println!("top channels: {}", top.join(", "));
        }
        Command::ReduceChannels(c) => {
            let cfg = load(&c)?;
            let set = read_features(cfg.dataset_path()?)?;
            let path = cfg
                .ranking
                .as_deref()
                .ok_or_else(|| AmdetError::invalid("ranking", "no ranking file given (set `ranking`)"))?;
            let ranking = read_ranking(path)?;
            let ks = if cfg.sweep_ks.is_empty() {
                default_sweep(set.n_channels())
            } else {
                cfg.sweep_ks.clone()
            };
            let sweep = reduce_channels_sweep(&cfg, &set, &ranking, &ks)?;
            write_sweep_csv(cfg.output_dir.join("sweep.csv"), &sweep)?;
            let path = cfg.output_dir.join("sweep.json");
            let text = serde_json::to_string_pretty(&sweep).map_err(|e| AmdetError::json(&path, e))?;
            std::fs::write(&path, text).map_err(|e| AmdetError::io(&path, e))?;
            for r in &sweep.rows {
                println!("k={:<3} accuracy {:.4} ± {:.4}", r.k, r.mean_accuracy, r.std_accuracy);
            }
        }
        Command::Count(c) => {
            let cfg = load(&c)?;
            let model_cfg = match &cfg.dataset {
                Some(p) => model_config_for(&cfg, &read_features(p)?)?,
                None => cfg.model.clone(),
            };
            let counts = count_params_flops(&model_cfg)?;
            write_count(cfg.output_dir.join("count.json"), &counts)?;
            print_json(&counts);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

