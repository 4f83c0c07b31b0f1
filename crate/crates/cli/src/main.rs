mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use soilmap::data::Task;
use soilmap::mosaic::PixelRegion;
use soilmap::Result;

use crate::commands::{parse_window, ModelKind, Run};
use crate::config::{Profile, RunConfig};

/// Fine-scale soil mapping pipeline: synthetic data, spatial splits, MiSo and
/// random-forest training, regional prediction and evaluation.
#[derive(Debug, Parser)]
#[command(name = "soilmap", version)]
struct Cli {
    /// TOML run configuration; unknown keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    profile: Option<Profile>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root; overrides `paths.out`.
    #[arg(long, global = true, env = "SOILMAP_OUT")]
    out: Option<PathBuf>,
    /// `section.key=value` override, repeatable; values are TOML literals.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Split scheme: `random` or `sh-<km>km`; overrides `split.scheme`.
    #[arg(long, global = true)]
    scheme: Option<String>,
    /// -v info, -vv debug; RUST_LOG takes precedence.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic stack, observations and region partition.
    Synth,
    /// Assign observations to five folds under the configured scheme.
    Split,
    /// Contrastive pretraining of MiSo on the stack.
    Pretrain,
    /// Finetune MiSo per fold and predict held-out points.
    Finetune {
        #[arg(long, value_parser = parse_task)]
        task: Task,
        /// Comma-separated fold subset.
        #[arg(long, value_delimiter = ',')]
        folds: Option<Vec<usize>>,
        /// Start from random weights instead of `pretrained.ckpt`.
        #[arg(long)]
        from_scratch: bool,
    },
    /// Train the random forest per fold and predict held-out points.
    TrainRf {
        #[arg(long, value_parser = parse_task)]
        task: Task,
        #[arg(long, value_delimiter = ',')]
        folds: Option<Vec<usize>>,
    },
    /// Rasterize class probabilities over a stack window.
    Predict {
        #[arg(long, value_parser = parse_task)]
        task: Task,
        #[arg(long, value_enum, default_value = "miso")]
        model: ModelKind,
        /// Which fold's model to use.
        #[arg(long, default_value_t = 0)]
        fold: usize,
        /// Stack pixel window `col,row,width,height`; default whole stack.
        #[arg(long, value_parser = parse_window)]
        window: Option<PixelRegion>,
        /// Tile side in stack pixels.
        #[arg(long)]
        tile: Option<usize>,
        #[arg(long)]
        overlap: Option<f64>,
        /// Gaussian σ in stack pixels.
        #[arg(long)]
        sigma: Option<f64>,
        /// Output meters per pixel.
        #[arg(long)]
        resolution: Option<f64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score held-out predictions and emit the report.
    Evaluate {
        #[arg(long, value_parser = parse_task)]
        task: Task,
        /// `name=path` prediction CSVs; default every trained model.
        #[arg(long = "predictions", value_parser = parse_named)]
        predictions: Vec<(String, PathBuf)>,
    },
    /// Print and save a text summary of an emitted report.
    Report {
        #[arg(long, value_parser = parse_task)]
        task: Task,
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

fn parse_task(s: &str) -> std::result::Result<Task, String> {
    Task::parse(s).map_err(|e| e.to_string())
}

fn parse_named(s: &str) -> std::result::Result<(String, PathBuf), String> {
    let (n, p) = s.split_once('=').ok_or("expected name=path")?;
    Ok((n.to_string(), PathBuf::from(p)))
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::resolve(cli.profile, cli.config.as_deref(), &cli.sets)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.paths.out = o.clone();
    }
    if let Some(s) = &cli.scheme {
        cfg.split.scheme = s.clone();
    }
    if let Command::Predict {
        tile,
        overlap,
        sigma,
        resolution,
        ..
    } = &cli.command
    {
        let m = &mut cfg.mosaic;
        m.tile = tile.or(m.tile);
        m.overlap = overlap.or(m.overlap);
        m.sigma = sigma.or(m.sigma);
        m.resolution = resolution.or(m.resolution);
    }
    cfg.finish()
}

fn run(cli: Cli) -> Result<()> {
    let run = Run::new(resolve(&cli)?)?;
    match cli.command {
        Command::Synth => run.synth(),
        Command::Split => run.split().map(drop),
        Command::Pretrain => run.pretrain(),
        Command::Finetune { task, folds, from_scratch } => run.finetune(task, &folds, from_scratch).map(drop),
        Command::TrainRf { task, folds } => run.train_rf(task, &folds).map(drop),
        Command::Predict {
            task,
            model,
            fold,
            window,
            output,
            ..
        } => run.predict(task, model, fold, window, output).map(|p| println!("{}", p.display())),
        Command::Evaluate { task, predictions } => run.evaluate(task, &predictions).map(drop),
        Command::Report { task, input } => run.report(task, input).map(|t| print!("{t}")),
    }
}

fn error_line(kind: &str, message: &str) -> String {
    format!("error: kind={kind} message={}", message.replace('\n', " "))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", error_line("usage", e.to_string().trim()));
            return ExitCode::from(2);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use soilmap::Error;

    #[test]
    fn error_line_is_single_line() {
        let e = Error::InvalidArgument("a\nb".into());
        assert_eq!(
            error_line(e.kind(), &e.to_string()),
            "error: kind=invalid_argument message=invalid argument: a b"
        );
    }
}
