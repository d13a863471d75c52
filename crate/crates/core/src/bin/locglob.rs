use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use locglob::scenario::{run_scenario_file, Command};

/// Runs a scenario file and writes `report.json` plus CSV series.
#[derive(Parser, Debug)]
#[command(name = "locglob", version)]
struct Args {
    /// Optional command; must match the one in the scenario file.
    command: Option<String>,
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Overrides the seed stored in the scenario.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() { 3 } else { 0 };
            return ExitCode::from(code);
        }
    };
    let command = match args.command.as_deref().map(str::parse::<Command>).transpose() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("locglob: {e}");
            return ExitCode::from(3);
        }
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads.max(1))
        .build_global()
    {
        eprintln!("locglob: {e}");
        return ExitCode::from(3);
    }
    let (code, err) = run_scenario_file(&args.scenario, &args.out, args.seed, command);
    if let Some(e) = err {
        eprintln!("locglob: {e}");
    }
    ExitCode::from(code as u8)
}
