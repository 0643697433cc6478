use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod output;
mod run;
mod scenario;
mod verify;

use commands::CommandError;
use scenario::ScenarioError;

#[derive(Parser, Debug)]
#[command(
    name = "qfi",
    version,
    about = "Quantum Fisher information and Bures metric toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate a scenario file and write one row per probe point.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Worker threads; defaults to the number of cores.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Directional jump of the continuous QFI at a point, as JSON.
    Jump {
        family: String,
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        at: Vec<String>,
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        dir: Vec<String>,
        /// Also extrapolate the directional limit numerically.
        #[arg(long)]
        confirm: bool,
    },
    /// QFI of the mixed family along a decreasing weight schedule, as JSON.
    Regularize {
        family: String,
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        at: Vec<String>,
        #[arg(long, value_delimiter = ',', required = true)]
        schedule: Vec<String>,
        /// Diagonal of the anchor state; the maximally mixed state by default.
        #[arg(long, value_delimiter = ',')]
        rho0: Option<Vec<String>>,
    },
    /// Run the property suite on seeded random families.
    Verify {
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        trials: usize,
    },
    /// Print the builtin family names.
    ListFamilies,
}

fn fail(code: u8, msg: &str) -> ExitCode {
    eprintln!("qfi: {msg}");
    ExitCode::from(code)
}

fn print_json(v: &serde_json::Value) -> ExitCode {
    let text = serde_json::to_string_pretty(v).expect("JSON values serialize");
    println!("{text}");
    ExitCode::SUCCESS
}

fn run_cmd(path: PathBuf, out: PathBuf, format: Format, threads: Option<usize>) -> ExitCode {
    let sc = match scenario::load(&path) {
        Ok(sc) => sc,
        Err(
            e @ (ScenarioError::Io(_) | ScenarioError::Parse(_) | ScenarioError::Validation(_)),
        ) => return fail(2, &e.to_string()),
    };
    if threads == Some(0) {
        return fail(2, "--threads must be at least 1");
    }
    let table = match run::run(&sc, threads.unwrap_or(0)) {
        Ok(t) => t,
        Err(e) => return fail(3, &e),
    };
    let written = File::create(&out).map_err(|e| e.to_string()).and_then(|f| {
        let mut w = BufWriter::new(f);
        match format {
            Format::Csv => output::write_csv(&table, &mut w).map_err(|e| e.to_string())?,
            Format::Json => output::write_json(&table, &mut w).map_err(|e| e.to_string())?,
        }
        w.flush().map_err(|e| e.to_string())
    });
    if let Err(e) = written {
        return fail(2, &format!("cannot write {}: {e}", out.display()));
    }
    let failed = table.failed_rows();
    if failed > 0 {
        return fail(
            3,
            &format!(
                "{failed} of {} rows failed; see the status column of {}",
                table.rows.len(),
                out.display()
            ),
        );
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<serde_json::Value, CommandError> = match cli.command {
        Command::Run {
            scenario,
            out,
            format,
            threads,
        } => return run_cmd(scenario, out, format, threads),
        Command::Jump {
            family,
            at,
            dir,
            confirm,
        } => commands::jump_cmd(&family, &at, &dir, confirm),
        Command::Regularize {
            family,
            at,
            schedule,
            rho0,
        } => commands::regularize_cmd(&family, &at, &schedule, rho0.as_deref()),
        Command::Verify { seed, trials } => {
            return match verify::verify(seed, trials) {
                Err(e) => fail(2, &e),
                Ok(results) => {
                    print!("{}", verify::render(&results, seed, trials));
                    if results.iter().all(|r| r.passed()) {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
            }
        }
        Command::ListFamilies => {
            print!("{}", commands::list_families());
            return ExitCode::SUCCESS;
        }
    };
    match result {
        Ok(v) => print_json(&v),
        Err(e) => fail(e.exit_code(), e.message()),
    }
}
