use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use tbm_cli::{execute, parse_config_file, parse_scenario, Mode};

/// Temporal belief scenario runner.
#[derive(Parser)]
#[command(name = "tbm", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute a scenario file and report its query answers.
    Run {
        file: PathBuf,
        /// Commit one transaction per step instead of batching the events.
        #[arg(long)]
        stepped: bool,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Include the firing / monitor / signal log in the output.
        #[arg(long)]
        trace: bool,
        /// Extra file of (config ...) overrides, applied last.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Parse a scenario file and report diagnostics without running it.
    Check { file: PathBuf },
}

#[derive(ValueEnum, Clone, Copy, PartialEq)]
enum Format {
    Text,
    Json,
}

fn read(path: &PathBuf) -> Result<String, ExitCode> {
    std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        ExitCode::from(2)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Check { file } => {
            let text = match read(&file) {
                Ok(t) => t,
                Err(code) => return code,
            };
            match parse_scenario(&text) {
                Ok(sc) => {
                    println!(
                        "ok: {} ({} points, {} rules, {} script steps)",
                        file.display(),
                        sc.points.len(),
                        sc.rules.len(),
                        sc.script.len()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Cmd::Run {
            file,
            stepped,
            format,
            trace,
            config,
        } => {
            let text = match read(&file) {
                Ok(t) => t,
                Err(code) => return code,
            };
            let mut sc = match parse_scenario(&text) {
                Ok(sc) => sc,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            if let Some(path) = config {
                let ctext = match read(&path) {
                    Ok(t) => t,
                    Err(code) => return code,
                };
                let patch = match parse_config_file(&ctext) {
                    Ok(p) => p,
                    Err(e) => {
                        eprintln!("error: {e}");
                        return ExitCode::from(2);
                    }
                };
                if let Err(e) = patch.apply(&mut sc.config) {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            }
            let mode = if stepped { Mode::Stepped } else { Mode::Batch };
            let report = match execute(&sc, mode) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            match format {
                Format::Text => print!("{}", report.render_text(trace)),
                Format::Json => println!("{}", report.render_json(trace)),
            }
            if report.expectations_met() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
    }
}
