//! Cost-gap study: record both permutation costs per utterance during
//! selected epochs of a gamma = 0 run, then report KDE curves of the
//! smaller (cost1) and larger (cost2) cost and the median relative gap
//! per epoch.

use std::collections::BTreeMap;
use std::path::PathBuf;

use probpit::error::{Error, Result};
use probpit::metrics::kde;
use probpit::separator::{train_with_observer, LossKind, SeparatorModel};

use super::{ensure_dir, load_features};
use crate::config::ExperimentConfig;
use crate::corpus::Split;
use crate::report::{cell, median, write_csv, write_kde_csv};

#[derive(Debug, Clone)]
pub struct EpochGap {
    pub epoch: usize,
    pub samples: usize,
    pub median_rel_gap: f64,
}

#[derive(Debug, Clone)]
pub struct CostgapOutcome {
    pub dir: PathBuf,
    pub gaps: Vec<EpochGap>,
}

impl CostgapOutcome {
    pub fn gap_for(&self, epoch: usize) -> Option<f64> {
        self.gaps.iter().find(|g| g.epoch == epoch).map(|g| g.median_rel_gap)
    }
}

/// Relative gap `|cost1 - cost2| / max(cost1, cost2)`, in [0, 1].
fn rel_gap(c1: f64, c2: f64) -> f64 {
    let hi = c1.max(c2);
    if hi <= 0.0 {
        0.0
    } else {
        (c1 - c2).abs() / hi
    }
}

/// Trains gamma = 0 for as many epochs as the deepest recording point
/// and emits per-epoch cost KDE curves plus the gap summary.
pub fn cmd_costgap(config: &ExperimentConfig, trial: u64) -> Result<CostgapOutcome> {
    config.validate()?;
    if config.separator.num_sources != 2 {
        return Err(Error::InvalidArgument(
            "the cost-gap study is defined for the two-source setting".into(),
        ));
    }
    let dir = config.output_dir.join("costgap");
    ensure_dir(&dir)?;

    let train_items = load_features(config, Split::Train)?;
    let val_items = load_features(config, Split::Val)?;

    let record_epochs = config.costgap.epochs.clone();
    let deepest = *record_epochs.iter().max().expect("validated nonempty");
    let mut tc = config.train_config_for_trial(0.0, trial)?;
    tc.epochs = deepest;

    let mut model = SeparatorModel::init(config.separator_config_for_trial(trial))?;
    // epoch -> (cost1, cost2) per consumed utterance
    let mut recorded: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    train_with_observer(&mut model, &train_items, &val_items, &tc, LossKind::Pit, &mut |rec| {
        if record_epochs.contains(&rec.epoch) {
            let c1 = rec.costs[0].min(rec.costs[1]);
            let c2 = rec.costs[0].max(rec.costs[1]);
            recorded.entry(rec.epoch).or_default().push((c1, c2));
        }
    })?;

    let mut gaps = Vec::new();
    let mut summary_rows = Vec::new();
    for (&epoch, pairs) in &recorded {
        let cost1: Vec<f64> = pairs.iter().map(|(a, _)| *a).collect();
        let cost2: Vec<f64> = pairs.iter().map(|(_, b)| *b).collect();
        let rels: Vec<f64> = pairs.iter().map(|(a, b)| rel_gap(*a, *b)).collect();
        let med = median(&rels);

        for (name, values) in [("cost1", &cost1), ("cost2", &cost2)] {
            match kde(values, config.costgap.kde_grid_points) {
                Ok(curve) => {
                    write_kde_csv(&dir.join(format!("kde_{name}_epoch{epoch}.csv")), &curve)?
                }
                Err(e) => {
                    return Err(Error::Data(format!(
                        "cost {name} KDE degenerate at epoch {epoch}: {e}"
                    )))
                }
            }
        }
        summary_rows.push(format!("{},{},{}", epoch, pairs.len(), cell(med)));
        gaps.push(EpochGap { epoch, samples: pairs.len(), median_rel_gap: med });
    }
    write_csv(&dir.join("gap_summary.csv"), "epoch,n,median_rel_gap", &summary_rows)?;
    Ok(CostgapOutcome { dir, gaps })
}
