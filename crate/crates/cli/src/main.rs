use clap::{Args, Parser, Subcommand};
use plap_cli::{run, Command, ConfigError, Format, Options, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "plap", version = plap_cli::output::VERSION, about = "Finite-difference lab for the regularized normalized p-Laplace flow")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve and, when a closed-form solution exists, tabulate the error
    Solve(Common),
    /// Solve and run the checks listed under [verify]
    Verify(Common),
    /// Solve once per epsilon of [sweep] and compare the runs
    Sweep(Common),
    /// Convergence study against a manufactured solution
    Mms(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides [output].dir)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Refinement depth: number of grids, each halving h and dt
    #[arg(long)]
    levels: Option<u32>,
    /// Worker threads for independent solves (default: all cores)
    #[arg(long)]
    jobs: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common) = match cli.command {
        Cmd::Solve(c) => (Command::Solve, c),
        Cmd::Verify(c) => (Command::Verify, c),
        Cmd::Sweep(c) => (Command::Sweep, c),
        Cmd::Mms(c) => (Command::Mms, c),
    };
    let config = match RunConfig::load(&common.config) {
        Ok(c) => c,
        Err(e @ ConfigError::Invalid(_)) => {
            eprintln!("{}: {e}", common.config.display());
            return ExitCode::from(1);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let options = Options {
        out: common.out,
        format: common.format,
        levels: common.levels,
        jobs: common.jobs,
    };
    match run(command, &config, &options) {
        Ok(summary) => {
            for e in &summary.entries {
                let r = &e.report;
                println!(
                    "{} {}: lhs {:e} rhs {:e} tol {:e}",
                    if r.pass { "PASS" } else { "FAIL" },
                    e.series_id,
                    r.lhs,
                    r.rhs,
                    r.tolerance
                );
            }
            if summary.all_pass() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(failure) => {
            eprintln!("error: {failure}");
            if let Some(partial) = failure.partial {
                eprintln!("wrote {} partial file(s)", partial.files.len());
            }
            ExitCode::from(1)
        }
    }
}
