//! The five experiment commands. Each returns a summary struct so tests
//! and the sweep can reuse the pieces without reparsing the reports.

mod costgap;
mod sweep;

pub use costgap::{cmd_costgap, CostgapOutcome, EpochGap};
pub use sweep::{cmd_sweep, SweepOutcome, TrialResult};

use std::fs;
use std::path::{Path, PathBuf};

use probpit::dsp::SignalBuffer;
use probpit::error::{Error, Result};
use probpit::metrics::eval_separation;
use probpit::separator::{
    load_checkpoint, save_checkpoint, separate, train, CheckpointMeta, LossKind, SeparatorModel,
    TrainHistory, TrainItem,
};

use crate::config::ExperimentConfig;
use crate::corpus::{self, LoadedMixture, Split};
use crate::report::{cell, write_csv};

pub struct SynthSummary {
    pub root: PathBuf,
    pub counts: [usize; 3],
    pub manifests: [PathBuf; 3],
}

/// Generates all three corpus splits plus manifests.
pub fn cmd_synth(config: &ExperimentConfig) -> Result<SynthSummary> {
    config.validate()?;
    let mut counts = [0; 3];
    let mut manifests: [PathBuf; 3] = Default::default();
    for (i, split) in Split::ALL.into_iter().enumerate() {
        let entries = corpus::synth_split(&config.corpus, split)?;
        counts[i] = entries.len();
        manifests[i] = corpus::manifest_path(&config.corpus.root, split);
    }
    Ok(SynthSummary { root: config.corpus.root.clone(), counts, manifests })
}

fn load_features(config: &ExperimentConfig, split: Split) -> Result<Vec<TrainItem>> {
    let mixtures = corpus::load_split(&config.corpus.root, split)?;
    corpus::featurize(&mixtures, &config.stft_config()?)
}

pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub history_csv: PathBuf,
    pub history: TrainHistory,
    pub loss_kind: LossKind,
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
}

fn history_rows(history: &TrainHistory) -> Vec<String> {
    history
        .epochs
        .iter()
        .map(|e| {
            format!(
                "{},{},{},{},{}",
                e.epoch,
                cell(e.train_loss),
                cell(e.val_loss),
                cell(e.lr),
                e.lr_reduced
            )
        })
        .collect()
}

const HISTORY_HEADER: &str = "epoch,train_loss,val_loss,lr,lr_reduced";

/// Trains one model at the given gamma; `trial` offsets both the
/// initialization and shuffle seeds, keeping gamma comparisons paired.
pub fn cmd_train(config: &ExperimentConfig, gamma: f64, trial: u64) -> Result<TrainOutcome> {
    config.validate()?;
    let train_items = load_features(config, Split::Train)?;
    let val_items = load_features(config, Split::Val)?;

    let out_dir = config.output_dir.join("train");
    ensure_dir(&out_dir)?;
    let (model, history, kind) = run_training(config, &train_items, &val_items, gamma, trial)?;

    let tag = format!("gamma{gamma}_trial{trial}");
    let checkpoint = out_dir.join(format!("model_{tag}.ckpt"));
    let meta = CheckpointMeta {
        train_seed: config.train.seed.wrapping_add(trial),
        loss_kind: kind.label().to_string(),
        gamma,
    };
    save_checkpoint(&checkpoint, &model, &meta)?;

    let history_csv = out_dir.join(format!("history_{tag}.csv"));
    write_csv(&history_csv, HISTORY_HEADER, &history_rows(&history))?;
    Ok(TrainOutcome { checkpoint, history_csv, history, loss_kind: kind })
}

/// Core training path shared by `train`, `sweep`, and `costgap`.
fn run_training(
    config: &ExperimentConfig,
    train_items: &[TrainItem],
    val_items: &[TrainItem],
    gamma: f64,
    trial: u64,
) -> Result<(SeparatorModel, TrainHistory, LossKind)> {
    let kind = if gamma == 0.0 { LossKind::Pit } else { LossKind::ProbPit };
    let mut model = SeparatorModel::init(config.separator_config_for_trial(trial))?;
    let tc = config.train_config_for_trial(gamma, trial)?;
    let history = train(&mut model, train_items, val_items, &tc, kind)?;
    Ok((model, history, kind))
}

#[derive(Debug, Clone)]
pub struct EvalRow {
    pub utt_id: String,
    pub source: usize,
    pub sdr_db: f64,
    pub sir_db: f64,
    pub sar_db: f64,
    pub permutation: String,
}

pub struct EvalOutcome {
    pub csv: PathBuf,
    pub rows: Vec<EvalRow>,
    pub mean_sdr: f64,
    pub mean_sir: f64,
    pub mean_sar: f64,
}

const EVAL_HEADER: &str = "utt_id,source,sdr_db,sir_db,sar_db,permutation";

/// Evaluates a checkpoint over a manifest, one CSV row per
/// (utterance, source) plus a trailing summary row of column means.
pub fn cmd_eval(
    config: &ExperimentConfig,
    checkpoint: &Path,
    manifest: &Path,
) -> Result<EvalOutcome> {
    let (model, _meta) = load_checkpoint(checkpoint)?;
    let mixtures = corpus::load_manifest_file(manifest, &config.corpus.root)?;
    let out_dir = config.output_dir.join("eval");
    ensure_dir(&out_dir)?;
    let stem = checkpoint
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("checkpoint")
        .to_string();
    let csv = out_dir.join(format!("eval_{stem}.csv"));
    evaluate_to_csv(config, &model, &mixtures, &csv)
}

pub(crate) fn evaluate_to_csv(
    config: &ExperimentConfig,
    model: &SeparatorModel,
    mixtures: &[LoadedMixture],
    csv: &Path,
) -> Result<EvalOutcome> {
    let stft_cfg = config.stft_config()?;
    let mut rows = Vec::new();
    for m in mixtures {
        let estimates = separate(model, &m.mixture, &stft_cfg)?;
        // resynthesis covers whole frames only; trim references to match
        let n = estimates[0].len();
        let refs: Vec<SignalBuffer> = m
            .sources
            .iter()
            .map(|s| SignalBuffer::new(s.samples[..n].to_vec(), s.sample_rate))
            .collect::<Result<_>>()?;
        let report = eval_separation(&estimates, &refs)?;
        let perm = report
            .chosen_permutation
            .mapping()
            .iter()
            .map(|t| t.to_string())
            .collect::<Vec<_>>()
            .join("-");
        for (source, e) in report.per_source.iter().enumerate() {
            rows.push(EvalRow {
                utt_id: m.utt_id.clone(),
                source,
                sdr_db: e.sdr_db,
                sir_db: e.sir_db,
                sar_db: e.sar_db,
                permutation: perm.clone(),
            });
        }
    }

    let mean = |f: fn(&EvalRow) -> f64| rows.iter().map(f).sum::<f64>() / rows.len() as f64;
    let mean_sdr = mean(|r| r.sdr_db);
    let mean_sir = mean(|r| r.sir_db);
    let mean_sar = mean(|r| r.sar_db);

    let mut lines: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{}",
                r.utt_id,
                r.source,
                cell(r.sdr_db),
                cell(r.sir_db),
                cell(r.sar_db),
                r.permutation
            )
        })
        .collect();
    lines.push(format!("mean,all,{},{},{},", cell(mean_sdr), cell(mean_sir), cell(mean_sar)));
    write_csv(csv, EVAL_HEADER, &lines)?;

    Ok(EvalOutcome { csv: csv.to_path_buf(), rows, mean_sdr, mean_sir, mean_sar })
}
