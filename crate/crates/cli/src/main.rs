use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dipsqz::config::Config;
use dipsqz::output::{compare, Table, Tolerances};
use dipsqz::runner::{exit_code, run, EXIT_CONFIG};
use dipsqz::Error;

#[derive(Parser)]
#[command(name = "dipsqz", version, about = "Spin squeezing in dipolar spin-S arrays")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a configuration file and write CSV + manifest.
    Run { config: PathBuf },
    /// Validate a configuration and print it with defaults filled in.
    Check { config: PathBuf },
    /// Per-column deviation between two CSV files (exit 1 if over tolerance).
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        /// Column override, `name=tol`; repeatable.
        #[arg(long = "column", value_parser = parse_column)]
        columns: Vec<(String, f64)>,
    },
}

fn parse_column(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or("expected name=tol")?;
    let v: f64 = v.parse().map_err(|_| format!("bad tolerance `{v}`"))?;
    Ok((k.to_string(), v))
}

fn load(path: &PathBuf) -> Result<Config, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    Config::parse(&text)
}

fn fail(e: &Error, code: i32) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Run { config } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(e) => return fail(&e, EXIT_CONFIG),
            };
            match run(&cfg) {
                Ok(summary) => {
                    for f in &summary.files {
                        println!("wrote {}", f.display());
                    }
                    if let Some(stop) = summary.manifest.get("stop_reason") {
                        println!("stop_reason={stop}");
                    }
                    if !summary.converged {
                        eprintln!("warning: solver did not converge");
                    }
                    ExitCode::from(summary.exit_code() as u8)
                }
                Err(e) => fail(&e, exit_code(&e)),
            }
        }
        Cmd::Check { config } => match load(&config) {
            Ok(cfg) => {
                print!("{}", cfg.to_toml());
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e, EXIT_CONFIG),
        },
        Cmd::Compare { a, b, tol, columns } => {
            let read = |p: &PathBuf| -> Result<Table, Error> {
                let bytes = std::fs::read(p).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))?;
                Table::from_csv(&bytes)
            };
            let tables = read(&a).and_then(|ta| Ok((ta, read(&b)?)));
            let (ta, tb) = match tables {
                Ok(t) => t,
                Err(e) => return fail(&e, EXIT_CONFIG),
            };
            let tol = Tolerances { default: tol, per_column: columns.into_iter().collect() };
            match compare(&ta, &tb, &tol) {
                Ok(r) => {
                    print!("{}", r.render());
                    if r.ok() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => fail(&e, EXIT_CONFIG),
            }
        }
    }
}
