use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use phasefac::factor::Algorithm;
use phasefac_cli::config::parse_band;
use phasefac_cli::{commands, CliResult, RunConfig};

/// Complex PARAFAC/PARAFAC2 factorization and phase-coupling analysis of
/// multichannel recordings.
#[derive(Parser)]
#[command(name = "phasefac", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic recording and its scene record.
    Gen {
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert a recording into a channel × frequency × trial tensor.
    Tensorize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit PARAFAC or PARAFAC2 to a tensor file.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// parafac | parafac2 (default from config).
        #[arg(long)]
        algo: Option<String>,
        #[arg(long)]
        rank: Option<usize>,
    },
    /// Connectivity map of a fitted model in a frequency band.
    Conn {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Band as lo:hi in Hz (default from config).
        #[arg(long)]
        band: Option<String>,
    },
    /// Run the benchmark sweep.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a sweep summary (.json) or matrix (.csv) as SVG.
    Plot {
        #[arg(long)]
        input: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(common: &Common) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<serde_json::Value> {
    match cli.command {
        Command::Gen { common, out } => commands::gen(&load(&common)?, &out),
        Command::Tensorize { common, input, out } => commands::tensorize_cmd(&load(&common)?, &input, &out),
        Command::Fit { common, input, out, algo, rank } => {
            let cfg = load(&common)?;
            let algo: Algorithm = match algo {
                Some(a) => a.parse()?,
                None => cfg.fit.algo,
            };
            commands::fit(&cfg, &input, algo, rank.unwrap_or(cfg.fit.rank), &out)
        }
        Command::Conn { common, input, out, band } => {
            let cfg = load(&common)?;
            let band = band.as_deref().map(parse_band).transpose()?.unwrap_or(cfg.conn.band_hz);
            commands::conn(&input, band, &out)
        }
        Command::Bench { common, out } => commands::bench(&load(&common)?, &out),
        Command::Plot { input, out } => commands::plot(&input, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

