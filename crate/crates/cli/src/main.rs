use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use idsa_lab::config::{keys_help, parse_config_with};
use idsa_lab::output::{error_record, write_outputs};
use idsa_lab::{run, CliError};

#[derive(Parser)]
#[command(name = "idsa-lab", version, about = "Isotropic diffusion source approximation laboratory")]
#[command(after_help = keys_help())]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a configuration file.
    #[command(after_help = keys_help())]
    Run {
        config: PathBuf,
        /// Override a configuration key; may be repeated.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("idsa-lab: {e}");
    eprintln!("{}", error_record(e));
    ExitCode::from(e.exit_code())
}

fn main() -> ExitCode {
    let Command::Run { config, set } = Cli::parse().command;
    let text = match fs::read_to_string(&config) {
        Ok(t) => t,
        Err(source) => return fail(&CliError::Io { path: config, source }),
    };
    let cfg = match parse_config_with(&text, &set) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    let (report, error) = run::execute(&cfg);
    if let Err(e) = write_outputs(&cfg, &report, error.as_ref()) {
        return fail(&e);
    }
    match error {
        Some(e) => fail(&e),
        None => {
            for t in &report.tables {
                println!("{}", cfg.output_dir.join(format!("{}.csv", t.name)).display());
            }
            println!("{}", cfg.output_dir.join("manifest.json").display());
            ExitCode::SUCCESS
        }
    }
}
