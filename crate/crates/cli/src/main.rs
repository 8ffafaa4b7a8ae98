use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use hammerstein::SolveReport;
use hammerstein_cli::config::load_config;
use hammerstein_cli::pipeline::{exit, run, write_artifacts, Command};
use hammerstein_cli::table::emit_convergence_table;
use serde::Deserialize;

/// Monotone successive approximations for Hammerstein integral equations on
/// the half-line, with numerical certificates.
#[derive(Parser)]
#[command(name = "hammerstein", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check kernel and nonlinearity conditions only.
    Check(RunArgs),
    /// Solve and certify.
    Solve(RunArgs),
    /// Solve, then solve the Hammerstein-Nemytsky equation.
    SolveNemytsky(RunArgs),
    /// Print the convergence table of a report file.
    Table {
        #[arg(long)]
        report: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (TOML; JSON for `.json` files, including report files).
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "hammerstein-out")]
    out_dir: PathBuf,
    /// Overrides `certificates.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c as u8)
}

fn run_command(command: Command, args: RunArgs) -> ExitCode {
    if let Some(n) = args.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return code(exit::CONFIG);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return code(exit::INTERNAL);
        }
    }
    let mut config = match load_config(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return code(exit::CONFIG);
        }
    };
    if let Some(seed) = args.seed {
        config.certificates.seed = seed;
    }
    let resolved = match config.resolve() {
        Ok(r) => r,
        Err(e) => {
            eprintln!("config error: {e}");
            return code(exit::CONFIG);
        }
    };

    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let clock = Instant::now();
    let outcome = run(command, &config, &resolved);
    let meta = serde_json::json!({
        "started_unix_seconds": started,
        "elapsed_seconds": clock.elapsed().as_secs_f64(),
        "threads": rayon::current_num_threads(),
        "config_path": args.config.display().to_string(),
    });
    if let Err(e) = write_artifacts(&args.out_dir, &outcome, &meta) {
        eprintln!("error: cannot write to {}: {e}", args.out_dir.display());
        return code(exit::INTERNAL);
    }
    let status = &outcome.report.status;
    for m in &status.messages {
        eprintln!("{}: {m}", status.outcome);
    }
    if let Some(s) = &outcome.report.solve {
        println!(
            "{}: {} iterations, sigma0 = {:.6}, residual = {:e}",
            status.outcome, s.iterations, s.sigma0, s.residual_inf
        );
    } else {
        println!("{}", status.outcome);
    }
    code(outcome.exit_code())
}

#[derive(Deserialize)]
struct ReportSolve {
    solve: Option<SolveReport>,
}

fn table(path: &Path) -> ExitCode {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return code(exit::CONFIG);
        }
    };
    match serde_json::from_str::<ReportSolve>(&text) {
        Ok(ReportSolve { solve: Some(s) }) => {
            print!("{}", emit_convergence_table(&s));
            code(exit::OK)
        }
        Ok(ReportSolve { solve: None }) => {
            eprintln!("error: {} contains no solve report", path.display());
            code(exit::CONFIG)
        }
        Err(e) => {
            eprintln!("error: {} is not a report file: {e}", path.display());
            code(exit::CONFIG)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Cmd::Check(a) => run_command(Command::Check, a),
        Cmd::Solve(a) => run_command(Command::Solve, a),
        Cmd::SolveNemytsky(a) => run_command(Command::SolveNemytsky, a),
        Cmd::Table { report } => table(&report),
    }
}
