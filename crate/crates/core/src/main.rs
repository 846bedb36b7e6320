use clap::{Parser, Subcommand};
use ibturbo::sim::{self, RunConfig};
use ibturbo::{selftest, Error, Result};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// LUT and BCJR turbo equalization: design, simulation and hardware cost.
#[derive(Parser, Debug)]
#[command(name = "ibturbo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Design the LUT equalizers of a configuration and write bundles.
    Design {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the configured design directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Monte Carlo BER/FER sweep; writes one CSV row per SNR point.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Transistor-count report at the optimal sub-block length.
    Hwcost {
        #[arg(long)]
        config: PathBuf,
        /// Overlap N_o between sub-blocks.
        #[arg(long, default_value_t = 10)]
        n_o: usize,
        /// Emit every even sub-block length instead of the optimum.
        #[arg(long)]
        scan: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fast consistency checks; exits nonzero when one fails.
    Selftest {
        /// Restrict to the named checks.
        #[arg(long)]
        only: Vec<String>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, text)?;
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("IBTURBO_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| Error::Config(format!("IBTURBO_THREADS={v} is not a count")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<bool> {
    configure_threads()?;
    match cli.command {
        Command::Design { config, out_dir } => {
            let mut cfg = RunConfig::load(&config)?;
            if out_dir.is_some() {
                cfg.equalizer.design_dir = out_dir;
            }
            let set = sim::design_all(&cfg)?;
            for (i, d) in set.designs.iter().enumerate() {
                eprintln!("iteration {i}");
                eprint!("{}", d.manifest());
                if let Some(p) = &set.paths[i] {
                    eprintln!("bundle = {}", p.display());
                }
                if let Some(rep) = &set.reports[i] {
                    for w in &rep.warnings {
                        eprintln!("warning: {w}");
                    }
                }
            }
            Ok(true)
        }
        Command::Simulate { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let rows = sim::run_sweep(&cfg)?;
            let mut buf = Vec::new();
            sim::write_results_csv(&rows, &mut buf)?;
            emit(out.as_deref(), &String::from_utf8_lossy(&buf))?;
            Ok(true)
        }
        Command::Hwcost { config, n_o, scan, out } => {
            let cfg = RunConfig::load(&config)?;
            let rows = if scan { sim::scan_hw(&cfg, n_o)? } else { sim::report_hw(&cfg, n_o)? };
            if !scan {
                for r in &rows {
                    eprint!("{} {}\n{}", r.equalizer, r.realization, r.report.to_text());
                }
            }
            emit(out.as_deref(), &sim::hw_csv(&rows))?;
            Ok(true)
        }
        Command::Selftest { only, seed } => {
            let checks = selftest::run(&only, seed)?;
            for c in &checks {
                println!("{}", c.line());
            }
            Ok(!checks.is_empty() && checks.iter().all(|c| c.passed))
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
