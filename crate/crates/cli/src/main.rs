use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mpqkd::io::{load_config, load_count_table, run, Mode, RunConfig};
use mpqkd::Error;

/// Mode-pairing MDI QKD simulator and key-rate analysis.
#[derive(Debug, Parser)]
#[command(name = "mpqkd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a session and run pairing, sifting and decoy analysis.
    Simulate(Common),
    /// Key rate from a measured count table (--counts).
    Analyze(Common),
    /// Key rate from the config's `direct` section.
    DirectKeyrate(Common),
    /// Analytic (and optionally sampled) pairing rates.
    PairingRate(Common),
    /// Strong-pulse frequency tracking on a simulated session.
    PhaseEstimate(Common),
    /// Simulated key rate over the config's distance list.
    Sweep(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (JSON). Built-in defaults when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Count table CSV (class,sent,total,error).
    #[arg(long, value_name = "PATH")]
    counts: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Report file; overrides the configured path. Stdout when neither is set.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
}

impl Command {
    fn split(&self) -> (Mode, &Common) {
        match self {
            Command::Simulate(c) => (Mode::Simulate, c),
            Command::Analyze(c) => (Mode::Analyze, c),
            Command::DirectKeyrate(c) => (Mode::DirectKeyrate, c),
            Command::PairingRate(c) => (Mode::PairingRate, c),
            Command::PhaseEstimate(c) => (Mode::PhaseEstimate, c),
            Command::Sweep(c) => (Mode::Sweep, c),
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| Error::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn execute(mode: Mode, args: &Common) -> Result<(), Error> {
    let mut config = match &args.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = args.seed {
        config.seed = s;
    }
    let counts = args.counts.as_ref().map(load_count_table).transpose()?;
    let out = run(&config, mode, counts.as_ref())?;

    let report = out.report_text();
    match args.out.as_ref().or(config.output.report.as_ref()) {
        Some(p) => write_file(p, &report)?,
        None => print!("{report}"),
    }
    if let (Some(csv), Some(p)) = (&out.curve_csv, &config.output.curve) {
        write_file(p, csv)?;
    }
    if let (Some(csv), Some(p)) = (&out.counts_csv, &config.output.counts) {
        write_file(p, csv)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (mode, args) = cli.command.split();
    if let Some(n) = args.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(mode, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_user_error() { 1 } else { 2 })
        }
    }
}
