//! gmsd: a desk-scale learned image codec with a Gaussian-mixture entropy
//! model and switchable mixed/separate hyperprior decoders.
//!
//! Exit codes: 0 success, 2 usage error, 3 data/format error, 4 numerical
//! failure.

mod commands;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "gmsd", version, about = "Learned image codec with mixed/separate hyperprior decoders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a directory of PPM/PGM images or synthetic data.
    Train {
        /// key=value config file (model + trainer keys)
        #[arg(long)]
        config: PathBuf,
        /// image directory, or synthetic:count=16,size=64,seed=0
        #[arg(long)]
        data: String,
        /// output checkpoint path
        #[arg(long)]
        out: PathBuf,
        /// training and init seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// loss history CSV (default: <out>.history.csv)
        #[arg(long)]
        history: Option<PathBuf>,
        /// optional held-out directory; defaults to a split of --data
        #[arg(long)]
        val_data: Option<String>,
    },
    /// Encode a PPM/PGM image to a gmsd bitstream.
    Encode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Decode a gmsd bitstream to a PPM image.
    Decode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Encode+decode a corpus and report bpp / PSNR / MS-SSIM per image.
    Eval {
        #[arg(long)]
        model: PathBuf,
        /// image directory
        #[arg(long)]
        data: String,
        /// output CSV
        #[arg(long)]
        out: PathBuf,
    },
    /// Train mixed and separate decoder modes under identical budgets and
    /// compare validation-loss curves (optionally with the widened arm).
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: String,
        /// comma-separated seed list, e.g. 1,2,3
        #[arg(long)]
        seeds: String,
        /// output prefix for curve CSVs and the summary
        #[arg(long)]
        out: PathBuf,
        /// also train the widened single-decoder arm
        #[arg(long, default_value_t = false)]
        widened: bool,
    },
    /// Emit the minimum-weight degeneracy map (CSV + PGM) for one image.
    Diagnose {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_prefix: PathBuf,
    },
    /// BD-rate between two RD-curve CSV files.
    Bdrate {
        #[arg(long)]
        anchor: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train {
            config,
            data,
            out,
            seed,
            history,
            val_data,
        } => commands::train(&config, &data, &out, seed, history.as_deref(), val_data.as_deref()),
        Command::Encode {
            model,
            input,
            output,
        } => commands::encode(&model, &input, &output),
        Command::Decode {
            model,
            input,
            output,
        } => commands::decode(&model, &input, &output),
        Command::Eval { model, data, out } => commands::eval(&model, &data, &out),
        Command::Compare {
            config,
            data,
            seeds,
            out,
            widened,
        } => commands::compare(&config, &data, &seeds, &out, widened),
        Command::Diagnose {
            model,
            input,
            out_prefix,
        } => commands::diagnose(&model, &input, &out_prefix),
        Command::Bdrate { anchor, test } => commands::bdrate(&anchor, &test),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
