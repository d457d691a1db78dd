use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stokes2p::config::parse_config;
use stokes2p::io::{converge_config, run_config};
use stokes2p::selftest::{check_names, run_selftests};
use stokes2p::{Error, Result};

#[derive(Parser)]
#[command(
    name = "stokes2p",
    version,
    about = "Two-phase Stokes flow with front tracking"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write diagnostics, dumps and (if available) errors.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a list of refinement levels and write a convergence table.
    Converge {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        levels: Vec<u32>,
        #[arg(long, default_value = "converge_out")]
        out: PathBuf,
    },
    /// Run the oracle-backed self checks.
    Selftest {
        #[arg(long)]
        filter: Option<String>,
    },
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("STOKES2P_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::config(format!(
            "STOKES2P_THREADS must be a positive integer, got {v:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Resource(e.to_string()))
}

fn read_config(path: &PathBuf) -> Result<stokes2p::config::RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

fn execute(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Run { config, out } => {
            let cfg = read_config(&config)?;
            let outcome = run_config(&cfg, &out)?;
            let last = outcome
                .diagnostics
                .last()
                .expect("at least the initial row");
            println!(
                "steps {}  t {:.6}  length {:.10e}  area {:.10e}  umax {:.3e}",
                last.m, last.t, last.length, last.area, last.umax
            );
            if let Some(e) = &outcome.errors {
                println!("err_X {:.5e}  err_U {:.5e}", e.err_x, e.err_u);
            }
            println!("{} files written to {}", outcome.files.len(), out.display());
        }
        Command::Converge {
            config,
            levels,
            out,
        } => {
            let cfg = read_config(&config)?;
            let parallel = rayon::current_num_threads() > 1;
            let report = converge_config(&cfg, &levels, &out, parallel)?;
            print!("{}", report.to_csv());
        }
        Command::Selftest { filter } => {
            let results = run_selftests(filter.as_deref());
            if results.is_empty() {
                return Err(Error::config(format!(
                    "no check matches the filter; available: {}",
                    check_names().join(", ")
                )));
            }
            let mut failed = 0;
            for r in &results {
                println!(
                    "{} {:<28} measured {:.3e}  tol {:.0e}  {:.2}s  {}",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.measured,
                    r.tolerance,
                    r.seconds,
                    r.detail
                );
                failed += usize::from(!r.passed);
            }
            if failed > 0 {
                return Err(Error::Contract(format!("{failed} self checks failed")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
