use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tsm_hpo::cli::{self, CliError, CompareOptions, RunOptions};
use tsm_hpo::MutationMode;

#[derive(Parser)]
#[command(name = "tsm-hpo", version, about = "Genetic-algorithm hyperparameter search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one optimization and write run-<seed>.json and history-<seed>.csv.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_parser = parse_mode)]
        mutation: Option<MutationMode>,
    },
    /// Re-evaluate the best settings of two runs and t-test the results.
    Compare {
        /// Baseline run.
        #[arg(long)]
        a: PathBuf,
        /// Challenger run.
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long, default_value_t = 30)]
        repeats: usize,
        /// Base seed for the re-evaluations.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Report path; a .txt table is written next to it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the grid of a configured search space.
    Space {
        #[arg(long)]
        config: PathBuf,
    },
}

fn parse_mode(s: &str) -> Result<MutationMode, String> {
    s.parse()
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run {
            config,
            seed,
            out,
            mutation,
        } => {
            let config = cli::load_config(&config)?;
            let output = cli::cmd_run(
                &config,
                &RunOptions {
                    seed,
                    out_dir: out,
                    mutation,
                    workers: None,
                },
            )?;
            let best = &output.record.best;
            println!(
                "best fitness {} at {:?}",
                best.full_fitness.unwrap_or(f64::NAN),
                best.values
            );
            println!("wrote {}", output.record_path.display());
            println!("wrote {}", output.history_path.display());
        }
        Command::Compare {
            a,
            b,
            alpha,
            repeats,
            seed,
            out,
        } => {
            let output = cli::cmd_compare(
                &a,
                &b,
                &CompareOptions {
                    alpha,
                    repeats,
                    seed,
                    out,
                    ..CompareOptions::default()
                },
            )?;
            print!("{}", output.report.render_table());
            println!("{}", output.report.verdict_text);
            println!("wrote {}", output.report_path.display());
        }
        Command::Space { config } => {
            let config = cli::load_config(&config)?;
            print!("{}", cli::cmd_space(&config)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let parsed = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(parsed.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
