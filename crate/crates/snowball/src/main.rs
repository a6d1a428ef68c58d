use std::io::Write;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use serde_json::json;
use snowball::cli::{execute, Cli};

fn emit_error(json_mode: bool, kind: &str, message: &str, code: u8) -> ExitCode {
    if json_mode {
        let err = json!({ "error": { "kind": kind, "message": message, "exit_code": code } });
        eprintln!("{err}");
    } else {
        eprintln!("error: {message}");
    }
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // Needed before parsing succeeds, so usage errors can be reported as JSON.
    let json_mode = std::env::args().any(|a| a == "--json");
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) if json_mode => return emit_error(true, "usage", e.to_string().trim(), 2),
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(2);
        }
    };
    let json_mode = cli.common.json;
    match execute(cli) {
        Ok(outcome) => {
            let mut stdout = std::io::stdout().lock();
            let written = if json_mode {
                writeln!(stdout, "{}", serde_json::to_string_pretty(&outcome.json).expect("outputs serialize"))
            } else {
                write!(stdout, "{}", outcome.text)
            };
            match written {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => emit_error(json_mode, "write", &format!("stdout: {e}"), 1),
            }
        }
        Err(e) => emit_error(json_mode, e.kind(), &e.to_string(), e.exit_code() as u8),
    }
}
