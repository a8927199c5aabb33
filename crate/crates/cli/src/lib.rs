//! Command-line front end: one subcommand per pipeline stage.

mod transport;

use std::path::PathBuf;
use std::time::Duration;

use clap::{Parser, Subcommand};
use saetbl::config::RunConfig;
use saetbl::{pipeline, ErrorKind, Result};

pub use transport::HttpTransport;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// Triple-barrier labelled supervised-autoencoder trading pipeline.
///
/// Stages run in order: `fetch` (or `synth`), `resample`, `label` (optional),
/// `run`, `report`, `portfolio`. Each reads the files the previous stage wrote
/// under the configured output directory.
///
/// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric or
/// training error.
#[derive(Debug, Parser)]
#[command(name = "saetbl", version)]
pub struct Cli {
    /// Run configuration (TOML). Relative paths inside it resolve against its directory.
    #[arg(short, long, global = true, default_value = "saetbl.toml")]
    pub config: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Download 1-minute klines for every symbol over the configured span.
    Fetch {
        /// Per-request timeout in seconds.
        #[arg(long, default_value_t = 30)]
        timeout: u64,
    },
    /// Write a deterministic synthetic market in place of `fetch`.
    Synth,
    /// Aggregate 1-minute bars to the configured interval.
    Resample,
    /// Write full-history triple-barrier labels for inspection.
    Label,
    /// Walk-forward training, prediction and out-of-sample backtest.
    Run {
        /// Maximum number of splits trained in parallel.
        #[arg(short, long, default_value_t = 1)]
        jobs: usize,
    },
    /// Performance report JSON and plot CSV per symbol.
    Report,
    /// Fixed-weight portfolio of all symbols and their return correlation.
    Portfolio,
}

pub fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Config => EXIT_CONFIG,
        ErrorKind::Data => EXIT_DATA,
        ErrorKind::Numeric => EXIT_NUMERIC,
    }
}

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".into(), |v| format!("{v:.3}"))
}

pub fn execute(cli: &Cli) -> Result<()> {
    let cfg = RunConfig::load(&cli.config)?;
    match &cli.command {
        Command::Fetch { timeout } => {
            let transport = HttpTransport::new(cfg.data.exchange_url.clone(), Duration::from_secs(*timeout));
            for s in pipeline::fetch(&cfg, &transport)? {
                println!("{}: {} bars, {} missing minutes -> {}", s.symbol, s.bars, s.gaps, s.path.display());
            }
        }
        Command::Synth => {
            for p in pipeline::synth(&cfg)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Resample => {
            for p in pipeline::resample_all(&cfg)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Label => {
            for p in pipeline::label_all(&cfg)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Run { jobs } => {
            for s in pipeline::run_all(&cfg, *jobs)? {
                println!(
                    "{}: {} splits ({} resumed), {} trades, final equity {:.2} -> {}",
                    s.symbol,
                    s.splits,
                    s.resumed,
                    s.trades,
                    s.final_equity,
                    s.manifest.display()
                );
            }
        }
        Command::Report => {
            for r in pipeline::report_all(&cfg)? {
                for (name, p) in [("sae", &r.sae), ("buy-and-hold", &r.buy_and_hold)] {
                    println!(
                        "{} {name}: total {} ARC {} ASD {} MDD {} IR {} IR* {}",
                        r.symbol,
                        pct(p.total_return),
                        pct(p.arc),
                        pct(p.asd),
                        pct(p.mdd),
                        opt(p.ir),
                        opt(p.ir_star)
                    );
                }
            }
        }
        Command::Portfolio => {
            let r = pipeline::portfolio(&cfg)?;
            for (name, p) in [("sae", &r.sae), ("buy-and-hold", &r.buy_and_hold)] {
                println!(
                    "portfolio {name}: total {} ARC {} MDD {} IR {} IR* {}",
                    pct(p.total_return),
                    pct(p.arc),
                    pct(p.mdd),
                    opt(p.ir),
                    opt(p.ir_star)
                );
            }
        }
    }
    Ok(())
}
