mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fishlen::Error;

#[derive(Parser, Debug)]
#[command(name = "fishlen", version, about = "Fish length estimation from instance masks and its evaluation")]
struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML file of `key = value` defaults, keyed by long flag name. Flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the subcommands that work on a subset of the dataset.
#[derive(Args, Debug, Clone, Default)]
struct Subset {
    /// Groups to use: comma-separated ids and ranges (`1-5,8`), or `test`, `validation`, `train`.
    #[arg(long)]
    groups: Option<String>,
    /// separated (set1 and set2), touching (all) or combined.
    #[arg(long)]
    regime: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Calibrate every group's camera from checkerboard correspondences.
    Calibrate {
        /// Directory of calibration files, one JSON file per group.
        #[arg(long)]
        input: PathBuf,
        /// Directory for the camera files.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        groups: Option<String>,
        /// Skip the joint nonlinear refinement.
        #[arg(long)]
        no_refine: bool,
    },
    /// Estimate lengths with the skeleton method.
    Skl {
        #[arg(long)]
        annotations: PathBuf,
        /// Directory of per-group camera files.
        #[arg(long)]
        cameras: PathBuf,
        /// Measure predicted masks instead of ground-truth masks.
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[command(flatten)]
        subset: Subset,
        #[arg(long)]
        conf_threshold: Option<f64>,
        /// Spacing of centerline samples, in pixels.
        #[arg(long)]
        step_px: Option<f64>,
        /// Output length file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Mask AP over IoU thresholds 0.50 to 0.95, per class and averaged.
    EvalSeg {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[command(flatten)]
        subset: Subset,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// MAE/MAPE per regime, error histograms and median-aggregation curves.
    EvalLen {
        #[arg(long)]
        annotations: PathBuf,
        /// Length file to evaluate.
        #[arg(long)]
        lengths: PathBuf,
        /// Prediction file; when given, estimates are matched to fish by mask IoU.
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[command(flatten)]
        subset: Subset,
        /// Estimates with a score below this are ignored.
        #[arg(long)]
        conf_threshold: Option<f64>,
        /// Histogram clip bound in centimetres.
        #[arg(long)]
        clip_cm: Option<f64>,
        #[arg(long)]
        bin_cm: Option<f64>,
        /// Sample counts for the aggregation curve, comma-separated.
        #[arg(long)]
        samples: Option<String>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic dataset with known lengths.
    Synth {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        groups: Option<String>,
        #[arg(long)]
        fish_per_group: Option<usize>,
        #[arg(long)]
        images_per_set: Option<usize>,
        /// Leave the `all` images without overlapping fish.
        #[arg(long)]
        no_occlusion: bool,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), Error> {
    let cfg = match &cli.config {
        Some(p) => config::ConfigFile::load(p)?,
        None => config::ConfigFile::default(),
    };
    let threads = cli.threads.or(cfg.get("threads")?);
    commands::init_threads(threads)?;
    let force = cli.force || cfg.get("force")?.unwrap_or(false);
    match cli.command {
        Command::Calibrate {
            input,
            out,
            groups,
            no_refine,
        } => commands::calibrate(&input, &out, cfg.or(groups, "groups")?, !no_refine, force),
        Command::Skl {
            annotations,
            cameras,
            predictions,
            subset,
            conf_threshold,
            step_px,
            out,
        } => commands::skl(commands::SklArgs {
            annotations,
            cameras,
            predictions,
            groups: cfg.or(subset.groups, "groups")?,
            regime: cfg.or(subset.regime, "regime")?,
            conf_threshold: cfg.or(conf_threshold, "conf-threshold")?,
            step_px: cfg.or(step_px, "step-px")?,
            out,
            force,
        }),
        Command::EvalSeg {
            annotations,
            predictions,
            subset,
            out,
        } => commands::eval_seg(
            &annotations,
            &predictions,
            cfg.or(subset.groups, "groups")?,
            cfg.or(subset.regime, "regime")?,
            &out,
            force,
        ),
        Command::EvalLen {
            annotations,
            lengths,
            predictions,
            subset,
            conf_threshold,
            clip_cm,
            bin_cm,
            samples,
            trials,
            seed,
            out,
        } => commands::eval_len(commands::EvalLenArgs {
            annotations,
            lengths,
            predictions,
            groups: cfg.or(subset.groups, "groups")?,
            regime: cfg.or(subset.regime, "regime")?,
            conf_threshold: cfg.or(conf_threshold, "conf-threshold")?,
            clip_cm: cfg.or(clip_cm, "clip-cm")?,
            bin_cm: cfg.or(bin_cm, "bin-cm")?,
            samples: cfg.or(samples, "samples")?,
            trials: cfg.or(trials, "trials")?,
            seed: cfg.or(seed, "seed")?,
            out,
            force,
        }),
        Command::Synth {
            seed,
            groups,
            fish_per_group,
            images_per_set,
            no_occlusion,
            out,
        } => commands::synth(commands::SynthArgs {
            seed: cfg.or(seed, "seed")?,
            groups: cfg.or(groups, "groups")?,
            fish_per_group: cfg.or(fish_per_group, "fish-per-group")?,
            images_per_set: cfg.or(images_per_set, "images-per-set")?,
            no_occlusion: no_occlusion || cfg.get("no-occlusion")?.unwrap_or(false),
            out,
            force,
        }),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
