//! Scenario runner: `pilotctl run <config.json>` and `pilotctl validate <config.json>`.
//!
//! Outputs go to `$PILOTCTL_OUT/<output>` (default root: current directory).
//! Exit codes: 0 ok, 1 invalid config, 2 runtime failure. Errors are printed
//! to stderr as one JSON object.

mod config;
mod output;
mod scenario;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use config::ScenarioConfig;
use output::Output;

const OUT_ENV: &str = "PILOTCTL_OUT";

#[derive(Parser)]
#[command(name = "pilotctl", version, about = "Pilot and data power control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a JSON config.
    Run { config: PathBuf },
    /// Check a config without running it.
    Validate { config: PathBuf },
}

enum Failure {
    Invalid(Vec<String>),
    Runtime(String),
}

fn load(path: &Path) -> Result<ScenarioConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Invalid(vec![format!("cannot read {}: {e}", path.display())]))?;
    serde_json::from_str(&text).map_err(|e| Failure::Invalid(vec![format!("cannot parse config: {e}")]))
}

fn checked(path: &Path) -> Result<ScenarioConfig, Failure> {
    let cfg = load(path)?;
    let v = cfg.validate();
    if v.is_empty() {
        Ok(cfg)
    } else {
        Err(Failure::Invalid(v))
    }
}

fn execute(cmd: Command) -> Result<serde_json::Value, Failure> {
    match cmd {
        Command::Validate { config } => {
            checked(&config)?;
            Ok(json!({ "status": "ok" }))
        }
        Command::Run { config } => {
            let cfg = checked(&config)?;
            let root = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
            let mut out = Output::new(&root, &cfg).map_err(|e| Failure::Runtime(format!("{e:#}")))?;
            scenario::run(&cfg, &mut out).map_err(|e| Failure::Runtime(format!("{e:#}")))?;
            let files: Vec<String> = out.files().iter().map(|p| p.display().to_string()).collect();
            Ok(json!({ "status": "ok", "scenario": cfg.scenario.name(), "files": files }))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(v) => {
            println!("{v}");
            ExitCode::SUCCESS
        }
        Err(Failure::Invalid(v)) => {
            eprintln!("{}", json!({ "status": "invalid", "violations": v }));
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("{}", json!({ "status": "error", "message": msg }));
            ExitCode::from(2)
        }
    }
}
