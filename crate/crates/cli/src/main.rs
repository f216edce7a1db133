use std::process::ExitCode;

use clap::Parser;
use wg_stokes_cli::config::{Cli, Command, StudyConfig};
use wg_stokes_cli::{run_mesh_check, run_probe, run_solve, CliError};

fn run(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Solve(args) => {
            let cfg = StudyConfig::for_solve(&args)?;
            let out = run_solve(&cfg)?;
            print!("{}", out.markdown);
            Ok(true)
        }
        Command::Probe(args) => {
            let cfg = StudyConfig::for_probe(&args)?;
            let out = run_probe(&cfg)?;
            let text = serde_json::to_string_pretty(&out).map_err(|e| CliError::Io(std::io::Error::other(e)))?;
            println!("{text}");
            Ok(true)
        }
        Command::MeshCheck(args) => {
            let cfg = StudyConfig::for_mesh_check(&args)?;
            run_mesh_check(&cfg, args.input.as_deref(), std::io::stdout())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("wg-stokes: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
