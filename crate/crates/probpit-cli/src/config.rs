//! Experiment configuration: one TOML file covering corpus synthesis,
//! the analysis front end, the model, training, and the sweep. Every
//! field has a desk-scale default, so an empty file (or none at all) is
//! a valid experiment. CLI flags override individual keys.
//!
//! ```toml
//! output_dir = "runs"   # where reports, checkpoints, and CSVs land
//! jobs = 0              # parallel sweep trials; 0 = all cores
//!
//! [corpus]
//! root = "corpus"       # corpus directory (created by `synth`)
//! train_count = 60
//! val_count = 20
//! test_count = 20
//! duration_s = 2.0
//! sir_low_db = 0.0      # per-mixture SIR drawn uniformly from
//! sir_high_db = 5.0     # [sir_low_db, sir_high_db]
//! seed = 101
//! kinds = ["harmonic", "am_noise", "chirp"]
//!
//! [stft]
//! frame_len = 256       # hop is always frame_len / 2
//! fft_size = 256        # 129 frequency bins
//!
//! [separator]
//! hidden_ff = 64
//! hidden_rec = 48
//! num_rec_layers = 2
//! num_sources = 2
//! dropout_rate = 0.2
//! seed = 1              # base init seed; trials add their index
//!
//! [train]
//! lr = 0.0005
//! lr_decay = 0.7
//! decay_patience = 2
//! decay_threshold = 0.003
//! epochs = 50
//! batch_size = 32
//! gamma = 0.0
//! seed = 1              # base shuffle/dropout seed; trials add their index
//!
//! [sweep]
//! gamma_list = []       # empty = auto-calibrate {0} + c * 2^k, k in -1..=6
//! trials_per_gamma = 5
//! kde_grid_points = 256
//!
//! [costgap]
//! epochs = [1, 15]      # epochs whose per-utterance costs are recorded
//! kde_grid_points = 256
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use probpit::dsp::{SourceKind, StftConfig};
use probpit::error::{Error, Result};
use probpit::loss::Gamma;
use probpit::separator::{SeparatorConfig, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub root: PathBuf,
    pub train_count: usize,
    pub val_count: usize,
    pub test_count: usize,
    pub duration_s: f64,
    pub sir_low_db: f64,
    pub sir_high_db: f64,
    pub seed: u64,
    pub kinds: Vec<String>,
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self {
            root: "corpus".into(),
            train_count: 60,
            val_count: 20,
            test_count: 20,
            duration_s: 2.0,
            sir_low_db: 0.0,
            sir_high_db: 5.0,
            seed: 101,
            kinds: SourceKind::ALL.iter().map(|k| k.name().to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StftSection {
    pub frame_len: usize,
    pub fft_size: usize,
}

impl Default for StftSection {
    fn default() -> Self {
        Self { frame_len: 256, fft_size: 256 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeparatorSection {
    pub hidden_ff: usize,
    pub hidden_rec: usize,
    pub num_rec_layers: usize,
    pub num_sources: usize,
    pub dropout_rate: f64,
    pub seed: u64,
}

impl Default for SeparatorSection {
    fn default() -> Self {
        Self {
            hidden_ff: 64,
            hidden_rec: 48,
            num_rec_layers: 2,
            num_sources: 2,
            dropout_rate: 0.2,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub lr: f64,
    pub lr_decay: f64,
    pub decay_patience: usize,
    pub decay_threshold: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            lr_decay: 0.7,
            decay_patience: 2,
            decay_threshold: 0.003,
            epochs: 50,
            batch_size: 32,
            gamma: 0.0,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Explicit gamma grid; must contain 0. Empty auto-calibrates
    /// `{0} + c * 2^k for k in -1..=6` from the epoch-1 cost gap.
    pub gamma_list: Vec<f64>,
    pub trials_per_gamma: usize,
    pub kde_grid_points: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { gamma_list: Vec::new(), trials_per_gamma: 5, kde_grid_points: 256 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostgapSection {
    /// Epochs whose per-utterance permutation costs are recorded.
    pub epochs: Vec<usize>,
    pub kde_grid_points: usize,
}

impl Default for CostgapSection {
    fn default() -> Self {
        Self { epochs: vec![1, 15], kde_grid_points: 256 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Parallel sweep trials; 0 means all available cores.
    pub jobs: usize,
    pub corpus: CorpusSection,
    pub stft: StftSection,
    pub separator: SeparatorSection,
    pub train: TrainSection,
    pub sweep: SweepSection,
    pub costgap: CostgapSection,
}

fn default_output_dir() -> PathBuf {
    "runs".into()
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.corpus;
        if c.train_count == 0 || c.val_count == 0 || c.test_count == 0 {
            return Err(Error::InvalidArgument("every corpus split needs at least one mixture".into()));
        }
        if c.train_count.max(c.val_count).max(c.test_count) > 1_000_000 {
            return Err(Error::InvalidArgument(
                "split sizes above 1e6 would overlap the per-split seed ranges".into(),
            ));
        }
        if !(c.duration_s > 0.0) {
            return Err(Error::InvalidArgument("corpus duration must be positive".into()));
        }
        if !(c.sir_low_db <= c.sir_high_db) {
            return Err(Error::InvalidArgument("sir_low_db must not exceed sir_high_db".into()));
        }
        if c.kinds.is_empty() {
            return Err(Error::InvalidArgument("corpus needs at least one source kind".into()));
        }
        for k in &c.kinds {
            SourceKind::parse(k)?;
        }
        if !self.sweep.gamma_list.is_empty() {
            if !self.sweep.gamma_list.contains(&0.0) {
                return Err(Error::InvalidArgument(
                    "gamma_list must contain 0 (the baseline)".into(),
                ));
            }
            if self.sweep.gamma_list.iter().any(|g| !g.is_finite() || *g < 0.0) {
                return Err(Error::InvalidArgument("gamma values must be finite and >= 0".into()));
            }
        }
        if self.sweep.trials_per_gamma == 0 {
            return Err(Error::InvalidArgument("trials_per_gamma must be >= 1".into()));
        }
        if self.costgap.epochs.is_empty() || self.costgap.epochs.contains(&0) {
            return Err(Error::InvalidArgument(
                "costgap.epochs must name at least one epoch >= 1".into(),
            ));
        }
        self.stft_config()?;
        self.separator_config().validate()?;
        Ok(())
    }

    pub fn stft_config(&self) -> Result<StftConfig> {
        StftConfig::new(self.stft.frame_len, self.stft.fft_size)
    }

    pub fn num_bins(&self) -> usize {
        self.stft.fft_size / 2 + 1
    }

    /// Separator config with `input_dim` bound to the analysis grid and
    /// the init seed offset by the trial index.
    pub fn separator_config_for_trial(&self, trial: u64) -> SeparatorConfig {
        let mut cfg = self.separator_config();
        cfg.seed = self.separator.seed.wrapping_add(trial);
        cfg
    }

    pub fn separator_config(&self) -> SeparatorConfig {
        SeparatorConfig {
            input_dim: self.num_bins(),
            hidden_ff: self.separator.hidden_ff,
            hidden_rec: self.separator.hidden_rec,
            num_rec_layers: self.separator.num_rec_layers,
            num_sources: self.separator.num_sources,
            dropout_rate: self.separator.dropout_rate,
            seed: self.separator.seed,
        }
    }

    /// Train config for one trial: gamma override plus seed offset.
    pub fn train_config_for_trial(&self, gamma: f64, trial: u64) -> Result<TrainConfig> {
        Ok(TrainConfig {
            lr: self.train.lr,
            lr_decay: self.train.lr_decay,
            decay_patience: self.train.decay_patience,
            decay_threshold: self.train.decay_threshold,
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            gamma: Gamma::new(gamma)?,
            seed: self.train.seed.wrapping_add(trial),
        })
    }

    pub fn effective_jobs(&self) -> usize {
        if self.jobs == 0 {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        } else {
            self.jobs
        }
    }

    pub fn source_kinds(&self) -> Vec<SourceKind> {
        self.corpus.kinds.iter().map(|k| SourceKind::parse(k).expect("validated")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_desk_scale() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.corpus.train_count, 60);
        assert_eq!(cfg.corpus.val_count, 20);
        assert_eq!(cfg.corpus.test_count, 20);
        assert_eq!(cfg.num_bins(), 129);
        assert_eq!(cfg.sweep.trials_per_gamma, 5);
        assert!(cfg.sweep.gamma_list.is_empty());
    }

    #[test]
    fn partial_toml_fills_in_defaults() {
        let cfg: ExperimentConfig = toml::from_str(
            r#"
            [corpus]
            train_count = 4
            [train]
            epochs = 3
            "#,
        )
        .unwrap();
        assert_eq!(cfg.corpus.train_count, 4);
        assert_eq!(cfg.corpus.val_count, 20);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.batch_size, 32);
    }

    #[test]
    fn gamma_list_must_include_baseline() {
        let mut cfg = ExperimentConfig::default();
        cfg.sweep.gamma_list = vec![1.0, 2.0];
        assert!(cfg.validate().is_err());
        cfg.sweep.gamma_list = vec![0.0, 1.0, 2.0];
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let r: std::result::Result<ExperimentConfig, _> = toml::from_str("unknown_key = 3");
        assert!(r.is_err());
    }
}
