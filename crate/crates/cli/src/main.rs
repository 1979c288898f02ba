//! `skelex`: skeleton extraction pipeline driver. Subcommands cover the
//! whole workflow: generate or ingest a corpus, split it object-wise,
//! augment the training split with rotations, train, predict and evaluate.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
//! failure.

use std::path::PathBuf;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use skelex_cli::commands;
use skelex_cli::config::{self, RunConfig};
use skelex_cli::error::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "skelex",
    about = "Skeleton extraction from binary shape masks: dataset tooling, training, prediction and evaluation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Config file (TOML; flat dotted keys, see the key list below)
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Force deterministic single-threaded execution (always on; accepted
    /// so scripted invocations can state it explicitly)
    #[arg(long, global = true)]
    deterministic: bool,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate a synthetic shape/skeleton corpus of rectangles, ellipses
    /// and L-shapes with thinning-based skeletons
    GenSynthetic {
        /// Dataset directory to write shapes/ and skeletons/ into [key: data.dir]
        #[arg(long)]
        data: Option<String>,
        /// Number of pairs [key: gen.count]
        #[arg(long)]
        count: Option<usize>,
        /// Image side length, at least 16 [key: gen.size]
        #[arg(long)]
        size: Option<usize>,
        /// Geometry seed [key: gen.seed]
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Split a dataset into train/validation object-wise and write the
    /// manifest
    Split {
        /// Dataset directory [key: data.dir]
        #[arg(long)]
        data: Option<String>,
        /// Manifest output path [key: data.manifest]
        #[arg(long)]
        manifest: Option<String>,
        /// Train fraction in (0, 1) [key: data.ratio]
        #[arg(long)]
        ratio: Option<f64>,
        /// Shuffle seed [key: data.seed]
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Grow the training split to a target size with rotated copies
    Augment {
        /// Dataset directory [key: data.dir]
        #[arg(long)]
        data: Option<String>,
        /// Manifest path [key: data.manifest]
        #[arg(long)]
        manifest: Option<String>,
        /// Training-set size to reach [key: augment.target]
        #[arg(long)]
        target: Option<usize>,
        /// Rotation angle seed [key: augment.seed]
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model and write checkpoint, history CSV and validation
    /// report
    Train {
        /// Dataset directory [key: data.dir]
        #[arg(long)]
        data: Option<String>,
        /// Manifest path [key: data.manifest]
        #[arg(long)]
        manifest: Option<String>,
        /// Output directory [key: out.dir]
        #[arg(long)]
        out: Option<String>,
        /// Input image height [key: network.input_height]
        #[arg(long)]
        input_height: Option<usize>,
        /// Input image width [key: network.input_width]
        #[arg(long)]
        input_width: Option<usize>,
        /// First encoder stage width [key: network.base_channels]
        #[arg(long)]
        base_channels: Option<usize>,
        /// Weight initialization seed [key: network.seed]
        #[arg(long)]
        init_seed: Option<u64>,
        /// Initial learning rate [key: train.lr0]
        #[arg(long)]
        lr0: Option<f64>,
        /// Mini-batch size [key: train.batch_size]
        #[arg(long)]
        batch_size: Option<usize>,
        /// Epoch cap [key: train.max_epochs]
        #[arg(long)]
        max_epochs: Option<usize>,
        /// Shuffling seed [key: train.seed]
        #[arg(long)]
        seed: Option<u64>,
        /// Drop the coordinate channels (ablation)
        #[arg(long)]
        no_coordconv: bool,
        /// Single-head decoder without side outputs (ablation)
        #[arg(long)]
        no_side_layers: bool,
        /// Objective: bce-dice (default) or bce-only [key: loss.dice_enabled]
        #[arg(long, value_parser = ["bce-dice", "bce-only"])]
        loss: Option<String>,
    },
    /// Run a checkpoint over images and write per-head probability and
    /// mask PNGs
    Predict {
        /// Checkpoint path [key: checkpoint.path]
        #[arg(long)]
        checkpoint: Option<String>,
        /// Image file or directory [key: predict.input]
        #[arg(long)]
        input: Option<String>,
        /// Output directory [key: out.dir]
        #[arg(long)]
        out: Option<String>,
        /// Heads to emit: side1..side4, fused, ensembled or all [key: predict.heads]
        #[arg(long)]
        heads: Option<String>,
        /// Mask binarization threshold [key: predict.threshold]
        #[arg(long)]
        threshold: Option<f64>,
        /// Side1 weight of the ensembled head [key: predict.ensemble_weight]
        #[arg(long)]
        weight: Option<f64>,
    },
    /// Score a checkpoint on a labeled dataset and print the per-head
    /// report
    Eval {
        /// Checkpoint path [key: checkpoint.path]
        #[arg(long)]
        checkpoint: Option<String>,
        /// Dataset directory [key: data.dir]
        #[arg(long)]
        data: Option<String>,
        /// Manifest path [key: data.manifest]
        #[arg(long)]
        manifest: Option<String>,
        /// Subset to score: train, val or all [key: eval.split]
        #[arg(long)]
        split: Option<String>,
        /// Scoring threshold [key: eval.threshold]
        #[arg(long)]
        threshold: Option<f64>,
        /// Side1 weight of the ensembled head [key: eval.ensemble_weight]
        #[arg(long)]
        weight: Option<f64>,
        /// Search the ensemble weight on this dataset before scoring
        #[arg(long)]
        search_weight: bool,
        /// Weight grid step for --search-weight [key: eval.grid_step]
        #[arg(long)]
        grid_step: Option<f64>,
        /// Pool confusion counts over all pixels instead of per-image F1
        #[arg(long)]
        global_pool: bool,
        /// Output directory for report.txt [key: out.dir]
        #[arg(long)]
        out: Option<String>,
        /// Write per-image F1 rows to this CSV [key: eval.per_image_csv]
        #[arg(long)]
        per_image_csv: Option<String>,
    },
}

fn main() {
    let cmd = Cli::command().after_help(config::keys_help());
    let matches = match cmd.try_get_matches() {
        Ok(m) => m,
        Err(e) => e.exit(),
    };
    let cli = Cli::from_arg_matches(&matches).expect("derived parser accepts its own matches");
    if let Err(e) = run(cli) {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}

macro_rules! apply {
    ($cfg:expr, $($field:expr => $flag:expr),+ $(,)?) => {
        $(if let Some(v) = $flag { $field = v; })+
    };
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.load_file(path)?;
    }
    match cli.command {
        Cmd::GenSynthetic { data, count, size, seed } => {
            apply!(cfg,
                cfg.data_dir => data,
                cfg.gen_count => count,
                cfg.gen_size => size,
                cfg.gen_seed => seed,
            );
            commands::cmd_gen_synthetic(&cfg)
        }
        Cmd::Split { data, manifest, ratio, seed } => {
            apply!(cfg,
                cfg.data_dir => data,
                cfg.manifest => manifest,
                cfg.ratio => ratio,
                cfg.split_seed => seed,
            );
            commands::cmd_split(&cfg)
        }
        Cmd::Augment { data, manifest, target, seed } => {
            apply!(cfg,
                cfg.data_dir => data,
                cfg.manifest => manifest,
                cfg.augment_target => target,
                cfg.augment_seed => seed,
            );
            commands::cmd_augment(&cfg)
        }
        Cmd::Train {
            data,
            manifest,
            out,
            input_height,
            input_width,
            base_channels,
            init_seed,
            lr0,
            batch_size,
            max_epochs,
            seed,
            no_coordconv,
            no_side_layers,
            loss,
        } => {
            apply!(cfg,
                cfg.data_dir => data,
                cfg.manifest => manifest,
                cfg.out_dir => out,
                cfg.network.input_size.0 => input_height,
                cfg.network.input_size.1 => input_width,
                cfg.network.base_channels => base_channels,
                cfg.network.seed => init_seed,
                cfg.train.lr0 => lr0,
                cfg.train.batch_size => batch_size,
                cfg.train.max_epochs => max_epochs,
                cfg.train.seed => seed,
            );
            if no_coordconv {
                cfg.network.coord_enabled = false;
            }
            if no_side_layers {
                cfg.network.side_layers_enabled = false;
            }
            if let Some(choice) = loss {
                cfg.train.loss.dice_enabled = choice == "bce-dice";
            }
            commands::cmd_train(&cfg)
        }
        Cmd::Predict { checkpoint, input, out, heads, threshold, weight } => {
            apply!(cfg,
                cfg.checkpoint => checkpoint,
                cfg.predict_input => input,
                cfg.out_dir => out,
                cfg.predict_heads => heads,
                cfg.predict_weight => weight,
            );
            if let Some(t) = threshold {
                cfg.predict_threshold = t as f32;
            }
            commands::cmd_predict(&cfg)
        }
        Cmd::Eval {
            checkpoint,
            data,
            manifest,
            split,
            threshold,
            weight,
            search_weight,
            grid_step,
            global_pool,
            out,
            per_image_csv,
        } => {
            apply!(cfg,
                cfg.checkpoint => checkpoint,
                cfg.data_dir => data,
                cfg.manifest => manifest,
                cfg.eval_split => split,
                cfg.eval_weight => weight,
                cfg.grid_step => grid_step,
                cfg.out_dir => out,
                cfg.per_image_csv => per_image_csv,
            );
            if let Some(t) = threshold {
                cfg.eval_threshold = t as f32;
            }
            if global_pool {
                cfg.global_pool = true;
            }
            commands::cmd_eval(&cfg, search_weight)
        }
    }
}
