mod args;
mod commands;
mod config;
mod error;
mod runlog;

use std::process::ExitCode;

use clap::Parser;

use crate::args::Cli;
use crate::commands::Ctx;
use crate::error::CliError;

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

fn run(raw: Vec<String>) -> Result<(), CliError> {
    let argv = config::merge(raw.clone())?;
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return Ok(());
            }
            let text = e.render().to_string();
            let text = text.trim_end();
            return Err(CliError::usage(text.strip_prefix("error: ").unwrap_or(text)));
        }
    };
    init_logging(cli.global.verbose);
    let jobs = if cli.global.deterministic {
        1
    } else {
        cli.global
            .jobs
            .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
            .max(1)
    };
    let mut ctx = Ctx::new(cli.global.seed, jobs)?;
    commands::dispatch(&cli.command, &mut ctx)?;
    let resolved = serde_json::to_value(&cli).expect("options serialize");
    ctx.log.finish(cli.command.name(), &raw[1..], cli.global.seed, &resolved)
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    match run(argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
