use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use probpit::error::Error;
use probpit_cli::commands;
use probpit_cli::config::ExperimentConfig;

/// Source-separation experiments: synthesize a corpus, train PIT or
/// soft-minimum models, evaluate SDR/SIR, sweep gamma, and study the
/// permutation cost gap.
#[derive(Parser)]
#[command(name = "probpit", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus and its manifests.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Override the corpus seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train one model; writes a checkpoint and a loss-history CSV.
    Train {
        #[command(flatten)]
        common: Common,
        /// Smoothing factor; 0 trains the hard-minimum baseline.
        #[arg(long)]
        gamma: Option<f64>,
        /// Trial index added to the init and shuffle seeds.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate a checkpoint against a manifest; writes an SDR/SIR/SAR CSV.
    Eval {
        #[command(flatten)]
        common: Common,
        checkpoint: PathBuf,
        manifest: PathBuf,
    },
    /// Train trials for every gamma and aggregate the comparison reports.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Parallel trials; 0 uses every core.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Record both permutation costs during selected epochs of a
    /// gamma = 0 run and report the relative-gap statistics.
    Costgap {
        #[command(flatten)]
        common: Common,
        /// Trial index added to the init and shuffle seeds.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::InvalidArgument(_) => EXIT_USAGE,
        Error::Numeric(_) => EXIT_NUMERIC,
        Error::Shape(_)
        | Error::Data(_)
        | Error::CheckpointVersion { .. }
        | Error::Contract(_)
        | Error::Io { .. }
        | Error::Wav { .. } => EXIT_DATA,
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Synth { common, seed } => {
            let mut cfg = load_config(&common)?;
            if let Some(seed) = seed {
                cfg.corpus.seed = seed;
            }
            let summary = commands::cmd_synth(&cfg)?;
            println!(
                "corpus at {}: {} train / {} val / {} test mixtures",
                summary.root.display(),
                summary.counts[0],
                summary.counts[1],
                summary.counts[2]
            );
        }
        Command::Train { common, gamma, seed } => {
            let cfg = load_config(&common)?;
            let gamma = gamma.unwrap_or(cfg.train.gamma);
            let outcome = commands::cmd_train(&cfg, gamma, seed)?;
            let last = outcome.history.epochs.last().expect("at least one epoch");
            println!(
                "trained {} model (gamma {gamma}, trial {seed}): final val loss {:.6}",
                outcome.loss_kind.label(),
                last.val_loss
            );
            println!("checkpoint: {}", outcome.checkpoint.display());
            println!("history:    {}", outcome.history_csv.display());
        }
        Command::Eval { common, checkpoint, manifest } => {
            let cfg = load_config(&common)?;
            let outcome = commands::cmd_eval(&cfg, &checkpoint, &manifest)?;
            println!(
                "evaluated {} rows: mean SDR {:.2} dB, mean SIR {:.2} dB",
                outcome.rows.len(),
                outcome.mean_sdr,
                outcome.mean_sir
            );
            println!("report: {}", outcome.csv.display());
        }
        Command::Sweep { common, jobs } => {
            let mut cfg = load_config(&common)?;
            if let Some(jobs) = jobs {
                cfg.jobs = jobs;
            }
            let outcome = commands::cmd_sweep(&cfg)?;
            if let Some(c) = outcome.calibrated_c {
                println!("calibrated gamma scale c = {c:.4}");
            }
            for (gi, gamma) in outcome.gamma_list.iter().enumerate() {
                println!("gamma {gamma:>12.4}: mean test SDR {:.3} dB", outcome.mean_sdr_for(gi));
            }
            for (gamma, t, dof, p) in &outcome.sdr_tests {
                println!("t-test SDR gamma {gamma:.4} vs 0: t = {t:.3}, dof = {dof}, p = {p:.4}");
            }
            println!("reports under {}", outcome.dir.display());
        }
        Command::Costgap { common, seed } => {
            let cfg = load_config(&common)?;
            let outcome = commands::cmd_costgap(&cfg, seed)?;
            for g in &outcome.gaps {
                println!(
                    "epoch {:>3}: median relative cost gap {:.4} ({} utterances)",
                    g.epoch, g.median_rel_gap, g.samples
                );
            }
            println!("reports under {}", outcome.dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's help/version "errors" are successes
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(EXIT_USAGE);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
