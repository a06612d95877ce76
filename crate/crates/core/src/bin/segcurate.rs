//! `segcurate` — curation pipeline CLI.
//!
//! Subcommands mirror the pipeline stages: enhance, augment, pseudo-label,
//! merge, evaluate, avg-weights, loss. A single JSON config parameterizes
//! everything; flags override it. Exit codes: 0 success, 1 validation or
//! contract error, 2 adapter/external failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use segcurate::config::{ChainKind, PipelineConfig};
use segcurate::modelmath::{GainCoefficients, LossComponents};
use segcurate::pipeline::{
    cmd_augment, cmd_avg_weights, cmd_enhance, cmd_evaluate, cmd_loss, cmd_merge,
    cmd_pseudo_label, log_json, RunContext,
};
use segcurate::Result;

#[derive(Parser)]
#[command(name = "segcurate", version, about = "Pseudo-label curation pipeline for instance segmentation")]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,

    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Args)]
struct CommonArgs {
    /// Pipeline config file (JSON); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Number of worker threads for per-image work (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Validate inputs and report what would be done without writing files.
    #[arg(long, global = true)]
    dry_run: bool,
}

#[derive(Subcommand)]
enum CliCommand {
    /// Apply the configured enhancement chain to a directory of PNGs.
    Enhance {
        in_dir: PathBuf,
        out_dir: PathBuf,
        /// Chain override: soft | final | none.
        #[arg(long)]
        chain: Option<String>,
    },
    /// Apply seeded random augmentations to a dataset and its images.
    Augment {
        dataset: PathBuf,
        images_dir: PathBuf,
        out_dir: PathBuf,
    },
    /// Run the inference adapter over the unlabeled set and write the
    /// confidence-gated pseudo-label dataset.
    PseudoLabel {
        /// Output dataset path.
        #[arg(short, long)]
        out: PathBuf,
        /// Confidence threshold override.
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Merge a labeled dataset with a pseudo-labeled one.
    Merge {
        labeled: PathBuf,
        pseudo: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Evaluate predictions against ground truth (F1, mAP@50).
    Evaluate {
        predictions: PathBuf,
        ground_truth: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Also write the per-class table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Matching IoU threshold override for the F1 computation.
        #[arg(long)]
        iou_threshold: Option<f64>,
    },
    /// Element-wise average of checkpoint files.
    AvgWeights {
        /// Input checkpoint paths (two or more typically).
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Weighted composite loss of explicit component values.
    Loss {
        /// Classification loss value.
        #[arg(long)]
        lc: f64,
        /// Distributional focal loss value.
        #[arg(long)]
        lf: f64,
        /// Segmentation loss value.
        #[arg(long)]
        ls: f64,
        /// Box IoU loss value.
        #[arg(long)]
        lb: f64,
        #[arg(long, default_value_t = 7.5)]
        gain_b: f64,
        #[arg(long, default_value_t = 0.5)]
        gain_c: f64,
        #[arg(long, default_value_t = 0.468)]
        gain_s: f64,
        #[arg(long, default_value_t = 2.0)]
        gain_f: f64,
    },
}

fn load_config(common: &CommonArgs) -> Result<PipelineConfig> {
    let mut config = match &common.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    let ctx = RunContext {
        jobs: cli.common.jobs,
        dry_run: cli.common.dry_run,
    };
    match cli.command {
        CliCommand::Enhance { in_dir, out_dir, chain } => {
            let mut config = load_config(&cli.common)?;
            if let Some(chain) = chain {
                config.enhance.chain = chain.parse::<ChainKind>()?;
            }
            cmd_enhance(&config, &in_dir, &out_dir, ctx)
        }
        CliCommand::Augment { dataset, images_dir, out_dir } => {
            let config = load_config(&cli.common)?;
            cmd_augment(&config, &dataset, &images_dir, &out_dir, ctx)
        }
        CliCommand::PseudoLabel { out, tau } => {
            let mut config = load_config(&cli.common)?;
            if let Some(tau) = tau {
                config.threshold.tau = tau;
            }
            cmd_pseudo_label(&config, &out, ctx)
        }
        CliCommand::Merge { labeled, pseudo, out } => {
            let config = load_config(&cli.common)?;
            cmd_merge(&config, &labeled, &pseudo, &out, ctx)
        }
        CliCommand::Evaluate {
            predictions,
            ground_truth,
            out,
            csv,
            iou_threshold,
        } => {
            let mut config = load_config(&cli.common)?;
            if let Some(threshold) = iou_threshold {
                config.eval.iou_threshold = threshold;
            }
            cmd_evaluate(&config, &predictions, &ground_truth, &out, csv.as_deref(), ctx)
                .map(|_| ())
        }
        CliCommand::AvgWeights { inputs, out } => {
            let config = load_config(&cli.common)?;
            cmd_avg_weights(&config, &inputs, &out, ctx)
        }
        CliCommand::Loss {
            lc,
            lf,
            ls,
            lb,
            gain_b,
            gain_c,
            gain_s,
            gain_f,
        } => {
            // the gains come from flags, but a bad --config should still fail
            load_config(&cli.common)?;
            let loss = cmd_loss(
                LossComponents {
                    l_c: lc,
                    l_f: lf,
                    l_s: ls,
                    l_b: lb,
                },
                GainCoefficients {
                    lambda_b: gain_b,
                    lambda_c: gain_c,
                    lambda_s: gain_s,
                    lambda_f: gain_f,
                },
            )?;
            println!("loss={}", segcurate::canon::fmt_fixed6(loss));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = err.exit_code();
            log_json(
                "error",
                &err.to_string(),
                &[("exit_code", serde_json::json!(code))],
            );
            ExitCode::from(code as u8)
        }
    }
}
