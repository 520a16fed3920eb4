use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use transferlab::pipeline::{cmd_all, cmd_generate, cmd_indicators, cmd_report, cmd_sweep, roster_table};
use transferlab::RunConfig;

#[derive(Parser)]
#[command(name = "transferlab", version, about = "Transfer sweeps and transferability indicators for sales forecasters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat key=value run configuration; defaults apply without one.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides global_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides transfer.max_degree.
    #[arg(long)]
    max_degree: Option<usize>,
    /// Overrides output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic branch CSVs and print the roster.
    Generate(Common),
    /// Train base models and every transfer path.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Continue an interrupted sweep.
        #[arg(long)]
        resume: bool,
    },
    /// Divergence matrices, projections, KDE grids and SVCCA scores.
    Indicators(Common),
    /// Correlations, transfer tables and the summary.
    Report(Common),
    /// generate (synthetic data only), sweep, indicators, report.
    All {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        resume: bool,
    },
}

fn load(c: &Common) -> transferlab::Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::parse("", std::path::Path::new(""))?,
    };
    if let Some(s) = c.seed {
        cfg.set_seed(s);
    }
    if let Some(d) = c.max_degree {
        cfg.transfer.max_degree = Some(d);
    }
    if let Some(o) = &c.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> transferlab::Result<()> {
    match cli.command {
        Command::Generate(c) => {
            let rows = cmd_generate(&load(&c)?)?;
            print!("{}", roster_table(&rows));
        }
        Command::Sweep { common, resume } => {
            let s = cmd_sweep(&load(&common)?, resume)?;
            println!("{} records ({} ok, {} failed, {} resumed)", s.records, s.ok, s.failed, s.resumed);
        }
        Command::Indicators(c) => {
            let s = cmd_indicators(&load(&c)?)?;
            println!("{} divergence matrices, {} SVCCA pairs", s.matrices.len(), s.svcca.len());
        }
        Command::Report(c) => {
            let b = cmd_report(&load(&c)?)?;
            println!("{} report files", b.files.len());
        }
        Command::All { common, resume } => {
            let cfg = load(&common)?;
            let b = cmd_all(&cfg, resume)?;
            println!("{} report files in {}", b.files.len(), cfg.output_dir.join("report").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
