//! Command-line front end: `simulate`, `analyze`, `reproduce`.
//!
//! Exit codes: 0 success, 1 error, 2 a reproduction check out of tolerance.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use chargenoise::config::{RunConfig, DEFAULT_SEED};
use chargenoise::estimation::JUMP_THRESHOLD_E;
use chargenoise::model::DeviceParams;
use chargenoise::reproduce::{reproduce, Figure};
use chargenoise::run::{analyze, simulate, AnalysisKind, AnalysisOptions};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "chargenoise",
    version,
    about = "Charge-noise spectroscopy simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample an environment and run the configured protocol.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the output directory in the config file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reduce CSV outputs to spectra, jump catalogs and histograms.
    Analyze {
        /// trace-psd, shots-cross-psd or jumps
        kind: AnalysisKind,
        /// Input CSVs; shot chunks are read in the order given.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Device parameters are taken from this run config.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Welch segment length in samples.
        #[arg(long)]
        segment: Option<usize>,
        /// Jump detection threshold in e.
        #[arg(long, default_value_t = JUMP_THRESHOLD_E)]
        threshold: f64,
    },
    /// Regenerate one figure and check it against its targets.
    Reproduce {
        /// fig3b, fig3c, fig4, figS1 or figS4
        figure: Figure,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate { config, seed, out } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let out = out
                .or_else(|| cfg.out.clone())
                .unwrap_or_else(|| PathBuf::from("out"));
            let manifest =
                simulate(&cfg, &out).with_context(|| format!("simulate into {}", out.display()))?;
            println!(
                "wrote {} file(s) to {} (config sha256 {})",
                manifest.outputs.len() + 1,
                out.display(),
                manifest.config_sha256
            );
        }
        Command::Analyze {
            kind,
            inputs,
            out,
            config,
            segment,
            threshold,
        } => {
            let params = match config {
                Some(path) => RunConfig::load(&path)?.params()?,
                None => DeviceParams::qubit_a(),
            };
            let opts = AnalysisOptions {
                params,
                segment_len: segment,
                threshold_e: threshold,
                ..AnalysisOptions::default()
            };
            let manifest = analyze(kind, &inputs, &out, &opts)?;
            println!(
                "{}: wrote {} file(s) to {}",
                kind.as_str(),
                manifest.outputs.len() + 1,
                out.display()
            );
        }
        Command::Reproduce { figure, seed, out } => {
            let out = out.unwrap_or_else(|| PathBuf::from(format!("reproduce-{figure}")));
            let verdict = reproduce(figure, seed, &out)?;
            for c in &verdict.checks {
                println!("{c}");
            }
            println!(
                "{figure} seed={seed}: {}",
                if verdict.pass { "PASS" } else { "FAIL" }
            );
            if !verdict.pass {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
