//! The gamma sweep: paired multi-seed trials per gamma, per-trial and
//! aggregate reports, KDE curves of the trial distributions, and paired
//! t-tests of every gamma against the gamma = 0 baseline.

use std::path::PathBuf;

use probpit::error::{Error, Result};
use probpit::metrics::{kde, paired_ttest};
use probpit::separator::{
    save_checkpoint, train_with_observer, CheckpointMeta, LossKind, SeparatorModel, TrainItem,
};
use rayon::prelude::*;

use super::{ensure_dir, evaluate_to_csv, history_rows, load_features, run_training, HISTORY_HEADER};
use crate::config::ExperimentConfig;
use crate::corpus::{self, write_atomic, Split};
use crate::report::{cell, mean, median, quantile, write_csv, write_kde_csv};

/// Test-set means for one trained model.
#[derive(Debug, Clone)]
pub struct TrialResult {
    pub gamma: f64,
    pub gamma_index: usize,
    pub trial: u64,
    pub seed: u64,
    pub sdr_per_source: Vec<f64>,
    pub sir_per_source: Vec<f64>,
    pub mean_sdr: f64,
    pub mean_sir: f64,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub dir: PathBuf,
    pub gamma_list: Vec<f64>,
    pub calibrated_c: Option<f64>,
    pub trials: Vec<TrialResult>,
    /// (gamma, t statistic, dof, p value) of mean test SDR against the
    /// gamma = 0 baseline.
    pub sdr_tests: Vec<(f64, f64, usize, f64)>,
}

impl SweepOutcome {
    /// Mean test SDR over trials for one gamma index.
    pub fn mean_sdr_for(&self, gamma_index: usize) -> f64 {
        let vals: Vec<f64> = self
            .trials
            .iter()
            .filter(|t| t.gamma_index == gamma_index)
            .map(|t| t.mean_sdr)
            .collect();
        mean(&vals)
    }
}

/// Gap between the two best permutation costs; the calibration scale.
fn min_gap(costs: &[f64]) -> f64 {
    let mut lo = f64::INFINITY;
    let mut second = f64::INFINITY;
    for &c in costs {
        if c < lo {
            second = lo;
            lo = c;
        } else if c < second {
            second = c;
        }
    }
    second - lo
}

/// Median epoch-1 cost gap of a fresh gamma = 0 run; sets the scale `c`
/// of the default gamma grid.
fn calibrate_scale(
    config: &ExperimentConfig,
    train_items: &[TrainItem],
    val_items: &[TrainItem],
) -> Result<f64> {
    let mut model = SeparatorModel::init(config.separator_config_for_trial(0))?;
    let mut tc = config.train_config_for_trial(0.0, 0)?;
    tc.epochs = 1;
    let mut gaps = Vec::with_capacity(train_items.len());
    train_with_observer(&mut model, train_items, val_items, &tc, LossKind::Pit, &mut |rec| {
        if rec.epoch == 1 {
            gaps.push(min_gap(rec.costs));
        }
    })?;
    let c = median(&gaps);
    if !(c > 0.0) {
        return Err(Error::Data(
            "gamma calibration found a zero epoch-1 cost gap; supply gamma_list explicitly".into(),
        ));
    }
    Ok(c)
}

#[derive(serde::Serialize)]
struct SweepMetadata<'a> {
    gamma_list: &'a [f64],
    calibrated_c: Option<f64>,
    trials_per_gamma: usize,
    jobs: usize,
    corpus_root: String,
    train_epochs: usize,
    notes: Vec<String>,
}

/// Runs `trials_per_gamma` paired trainings for every gamma and writes
/// the full report set under `{output_dir}/sweep/`.
pub fn cmd_sweep(config: &ExperimentConfig) -> Result<SweepOutcome> {
    config.validate()?;
    let dir = config.output_dir.join("sweep");
    ensure_dir(&dir)?;

    let train_items = load_features(config, Split::Train)?;
    let val_items = load_features(config, Split::Val)?;
    let test_mixtures = corpus::load_split(&config.corpus.root, Split::Test)?;

    let (gamma_list, calibrated_c) = if config.sweep.gamma_list.is_empty() {
        let c = calibrate_scale(config, &train_items, &val_items)?;
        let mut list = vec![0.0];
        list.extend((-1..=6).map(|k| c * 2f64.powi(k)));
        (list, Some(c))
    } else {
        (config.sweep.gamma_list.clone(), None)
    };

    let trials = config.sweep.trials_per_gamma as u64;
    let jobs: Vec<(usize, u64)> =
        (0..gamma_list.len()).flat_map(|gi| (0..trials).map(move |t| (gi, t))).collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.effective_jobs())
        .build()
        .map_err(|e| Error::Numeric(format!("thread pool: {e}")))?;
    let results: Result<Vec<TrialResult>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(gamma_index, trial)| {
                let gamma = gamma_list[gamma_index];
                let (model, history, kind) =
                    run_training(config, &train_items, &val_items, gamma, trial)?;

                let tag = format!("g{gamma_index}_t{trial}");
                let meta = CheckpointMeta {
                    train_seed: config.train.seed.wrapping_add(trial),
                    loss_kind: kind.label().to_string(),
                    gamma,
                };
                save_checkpoint(dir.join(format!("model_{tag}.ckpt")), &model, &meta)?;
                write_csv(
                    &dir.join(format!("history_{tag}.csv")),
                    HISTORY_HEADER,
                    &history_rows(&history),
                )?;

                let eval = evaluate_to_csv(
                    config,
                    &model,
                    &test_mixtures,
                    &dir.join(format!("eval_{tag}.csv")),
                )?;
                let s = config.separator.num_sources;
                let mut sdr_per_source = vec![0.0; s];
                let mut sir_per_source = vec![0.0; s];
                let per_source_rows = eval.rows.len() / s;
                for row in &eval.rows {
                    sdr_per_source[row.source] += row.sdr_db / per_source_rows as f64;
                    sir_per_source[row.source] += row.sir_db / per_source_rows as f64;
                }
                Ok(TrialResult {
                    gamma,
                    gamma_index,
                    trial,
                    seed: config.train.seed.wrapping_add(trial),
                    sdr_per_source,
                    sir_per_source,
                    mean_sdr: eval.mean_sdr,
                    mean_sir: eval.mean_sir,
                })
            })
            .collect()
    });
    let results = results?;

    write_reports(config, &dir, &gamma_list, calibrated_c, results)
}

fn write_reports(
    config: &ExperimentConfig,
    dir: &PathBuf,
    gamma_list: &[f64],
    calibrated_c: Option<f64>,
    trials: Vec<TrialResult>,
) -> Result<SweepOutcome> {
    let s = config.separator.num_sources;
    let mut notes = Vec::new();

    // per-trial table
    let mut header = String::from("gamma,trial,seed");
    for src in 0..s {
        header.push_str(&format!(",sdr_src{src}"));
    }
    header.push_str(",mean_sdr");
    for src in 0..s {
        header.push_str(&format!(",sir_src{src}"));
    }
    header.push_str(",mean_sir");
    let rows: Vec<String> = trials
        .iter()
        .map(|t| {
            let mut row = format!("{},{},{}", cell(t.gamma), t.trial, t.seed);
            for v in &t.sdr_per_source {
                row.push_str(&format!(",{}", cell(*v)));
            }
            row.push_str(&format!(",{}", cell(t.mean_sdr)));
            for v in &t.sir_per_source {
                row.push_str(&format!(",{}", cell(*v)));
            }
            row.push_str(&format!(",{}", cell(t.mean_sir)));
            row
        })
        .collect();
    write_csv(&dir.join("trials.csv"), &header, &rows)?;

    // per-gamma boxplot stats and KDE curves
    let mut stat_rows = Vec::new();
    for (gi, &gamma) in gamma_list.iter().enumerate() {
        for (metric, pick) in [
            ("sdr", Box::new(|t: &TrialResult| t.mean_sdr) as Box<dyn Fn(&TrialResult) -> f64>),
            ("sir", Box::new(|t: &TrialResult| t.mean_sir)),
        ] {
            let vals: Vec<f64> =
                trials.iter().filter(|t| t.gamma_index == gi).map(|t| pick(t)).collect();
            stat_rows.push(format!(
                "{},{},{},{},{},{},{},{}",
                cell(gamma),
                metric,
                cell(quantile(&vals, 0.0)),
                cell(quantile(&vals, 0.25)),
                cell(median(&vals)),
                cell(quantile(&vals, 0.75)),
                cell(quantile(&vals, 1.0)),
                cell(mean(&vals))
            ));
            if vals.len() >= 2 {
                match kde(&vals, config.sweep.kde_grid_points) {
                    Ok(curve) => write_kde_csv(
                        &dir.join(format!("kde_{metric}_g{gi}.csv")),
                        &curve,
                    )?,
                    Err(e) => notes.push(format!("kde {metric} gamma index {gi} skipped: {e}")),
                }
            } else {
                notes.push(format!("kde {metric} gamma index {gi} skipped: single trial"));
            }
        }
    }
    write_csv(
        &dir.join("gamma_stats.csv"),
        "gamma,metric,min,q1,median,q3,max,mean",
        &stat_rows,
    )?;

    // paired t-tests against the gamma = 0 baseline
    let base_index = gamma_list
        .iter()
        .position(|g| *g == 0.0)
        .ok_or_else(|| Error::InvalidArgument("gamma list lost its 0 baseline".into()))?;
    let collect_by_trial = |gi: usize, pick: &dyn Fn(&TrialResult) -> f64| -> Vec<f64> {
        let mut pairs: Vec<(u64, f64)> = trials
            .iter()
            .filter(|t| t.gamma_index == gi)
            .map(|t| (t.trial, pick(t)))
            .collect();
        pairs.sort_by_key(|(t, _)| *t);
        pairs.into_iter().map(|(_, v)| v).collect()
    };

    let mut ttest_rows = Vec::new();
    let mut sdr_tests = Vec::new();
    for (gi, &gamma) in gamma_list.iter().enumerate() {
        if gi == base_index {
            continue;
        }
        for (metric, pick) in [
            ("sdr", Box::new(|t: &TrialResult| t.mean_sdr) as Box<dyn Fn(&TrialResult) -> f64>),
            ("sir", Box::new(|t: &TrialResult| t.mean_sir)),
        ] {
            let a = collect_by_trial(gi, pick.as_ref());
            let b = collect_by_trial(base_index, pick.as_ref());
            match paired_ttest(&a, &b) {
                Ok(r) => {
                    ttest_rows.push(format!(
                        "{},{},{},{},{}",
                        cell(gamma),
                        metric,
                        cell(r.t_stat),
                        r.dof,
                        cell(r.p_value)
                    ));
                    if metric == "sdr" {
                        sdr_tests.push((gamma, r.t_stat, r.dof, r.p_value));
                    }
                }
                Err(e) => notes.push(format!("t-test {metric} gamma {gamma} skipped: {e}")),
            }
        }
    }
    write_csv(&dir.join("ttest.csv"), "gamma,metric,t_stat,dof,p_value", &ttest_rows)?;

    let metadata = SweepMetadata {
        gamma_list,
        calibrated_c,
        trials_per_gamma: config.sweep.trials_per_gamma,
        jobs: config.effective_jobs(),
        corpus_root: config.corpus.root.display().to_string(),
        train_epochs: config.train.epochs,
        notes,
    };
    let json = serde_json::to_string_pretty(&metadata)
        .map_err(|e| Error::Data(format!("sweep metadata serialization: {e}")))?;
    write_atomic(&dir.join("metadata.json"), json.as_bytes())?;

    Ok(SweepOutcome {
        dir: dir.clone(),
        gamma_list: gamma_list.to_vec(),
        calibrated_c,
        trials,
        sdr_tests,
    })
}
