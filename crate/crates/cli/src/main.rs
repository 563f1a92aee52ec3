use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stmrf::config::PipelineConfig;
use stmrf::par;
use stmrf::pipeline::{cmd_assess, cmd_classify, cmd_regularize, cmd_synth, Method};

/// Multi-temporal land-cover classification with spatio-temporal MRF
/// regularization, on a synthetic scene.
#[derive(Debug, Parser)]
#[command(name = "stmrf", version)]
struct Cli {
    /// Config file of `section.key = value` lines; built-in defaults otherwise.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Overrides `pipeline.seed`.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,

    /// Output directory; must exist.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic scene, reference polygons and sample splits.
    Synth,
    /// Extract features, train one classifier per run and date, predict.
    Classify,
    /// Turn class probabilities into label maps.
    Regularize {
        #[arg(long, value_parser = parse_method)]
        mode: Method,
    },
    /// Area-adjusted accuracy reports, burnt-area series, agreement maps.
    Assess,
}

fn parse_method(s: &str) -> Result<Method, String> {
    Method::parse(s).map_err(|e| e.to_string())
}

fn run(cli: &Cli) -> stmrf::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
        cfg.validate()?;
    }
    let out = cli.out.as_path();
    match cli.command {
        Command::Synth => cmd_synth(&cfg, out),
        Command::Classify => cmd_classify(&cfg, out),
        Command::Regularize { mode } => cmd_regularize(&cfg, out, mode),
        Command::Assess => {
            let summary = cmd_assess(&cfg, out)?;
            for (m, oa) in &summary.mean_oa {
                println!("{}\t{oa:.4}", m.name());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let result = match cli.threads {
        Some(n) => par::with_threads(n as usize, || run(&cli)),
        None => run(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
