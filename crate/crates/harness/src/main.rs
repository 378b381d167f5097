use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bangcross_harness::acceptance::{run_check, select, verify_files, Tolerances, DEFAULT_SEED};
use bangcross_harness::config::Scenario;
use bangcross_harness::converge::{converge_files, Ladder};
use bangcross_harness::oracle::{oracle_files, OracleConfig};
use bangcross_harness::output::OutputSet;
use bangcross_harness::run::run_scenario;
use bangcross_harness::{HarnessError, Result};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bangcross", version, about = "Field transmission across a conformal bang surface")]
struct Cli {
    /// Output directory; created if missing.
    #[arg(long, global = true, env = "BANGCROSS_OUT", default_value = "out")]
    out: PathBuf,
    /// Overrides the seed of the config (or of the acceptance data).
    #[arg(long, global = true, env = "BANGCROSS_SEED")]
    seed: Option<u64>,
    /// Worker threads for per-mode parallelism.
    #[arg(long, global = true, env = "BANGCROSS_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its CSV, JSON and field outputs.
    Run { config: PathBuf },
    /// Run the acceptance checks.
    Verify {
        /// Only checks carrying this tag (repeatable).
        #[arg(long = "tag")]
        tags: Vec<String>,
        /// TOML table of tolerance overrides.
        #[arg(long)]
        tolerances: Option<PathBuf>,
    },
    /// Rerun a scenario over a resolution ladder (ratio, tol, series, lambda).
    Converge { config: PathBuf, ladder: String },
    /// Compare the pipeline with the Frobenius series oracle.
    Oracle { config: PathBuf },
}

fn commit(files: &OutputSet, out: &Path) -> Result<()> {
    for p in files.commit(out)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })
}

fn execute(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        // Fails only if a pool already exists, in which case that one is used.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let origin = |p: &Path| p.display().to_string();
    match &cli.command {
        Command::Run { config } => {
            let (scenario, text) = Scenario::load(config)?;
            let report = run_scenario(&scenario, &text, &origin(config), cli.seed)?;
            commit(&report.files, &cli.out)?;
            Ok(true)
        }
        Command::Verify { tags, tolerances } => {
            let (tol, text) = match tolerances {
                Some(p) => {
                    let text = read(p)?;
                    (Tolerances::with_overrides(&text, &origin(p))?, text)
                }
                None => (Tolerances::default(), String::new()),
            };
            let seed = cli.seed.unwrap_or(DEFAULT_SEED);
            let mut reports = Vec::new();
            for check in select(tags)? {
                let r = run_check(check, &tol, seed);
                println!("{}", r.line());
                reports.push(r);
            }
            commit(&verify_files(&reports, &tol, seed, &text)?, &cli.out)?;
            let failed: Vec<&str> = reports.iter().filter(|r| !r.passed()).map(|r| r.id).collect();
            if failed.is_empty() {
                println!("all {} checks passed", reports.len());
            } else {
                println!("failed: {}", failed.join(", "));
            }
            Ok(failed.is_empty())
        }
        Command::Converge { config, ladder } => {
            let ladder: Ladder = ladder.parse()?;
            let (scenario, text) = Scenario::load(config)?;
            let (table, files) = converge_files(&scenario, &text, &origin(config), cli.seed, ladder)?;
            for (l, o) in table.levels.iter().zip(table.observed_orders()) {
                let order = o.map_or(String::from("-"), |o| format!("{o:.2}"));
                println!("{:>12e}  error {:.3e}  order {order}", l.parameter, l.error);
            }
            commit(&files, &cli.out)?;
            Ok(true)
        }
        Command::Oracle { config } => {
            let (c, text) = OracleConfig::load(config)?;
            let (rows, files) = oracle_files(&c, &text)?;
            for r in &rows {
                println!("lambda {:e}  delta {:.12e}  rel_error {:.3e}", r.lambda, r.delta, r.rel_error);
            }
            commit(&files, &cli.out)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(2)
        }
    }
}
