mod args;
mod commands;
mod io;
mod manifest;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use hsdemix::{Error, Result};

use args::{Cli, Command, DictCommand};
use manifest::Run;

const EXIT_DOMAIN: u8 = 1;
const EXIT_USAGE: u8 = 2;

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn report_error(category: &str, message: &str) {
    eprintln!("error: category={category} message={}", one_line(message));
}

fn execute(cli: &Cli, run: &mut Run) -> Result<()> {
    let format = cli.global.format;
    match &cli.command {
        Command::Demix(a) => commands::demix(a, format, run),
        Command::Detect(a) => commands::detect(a, run),
        Command::Diagnose(a) => commands::diagnose(a, run),
        Command::Dict(DictCommand::Sample(a)) => commands::dict_sample(a, format, run),
        Command::Dict(DictCommand::Learn(a)) => commands::dict_learn(a, format, run),
        Command::Synth(a) => commands::synth(a, format, run),
        Command::RocTable(a) => commands::roc_table(a, run),
    }
}

fn dispatch(argv: Vec<std::ffi::OsString>) -> ExitCode {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            _ => {
                let text = e.to_string();
                let head = text.split("\n\n").next().unwrap_or("");
                report_error("usage", head.trim_start_matches("error: "));
                return ExitCode::from(EXIT_USAGE);
            }
        },
    };

    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.global.jobs).build() {
        Ok(pool) => pool,
        Err(e) => {
            report_error("config", &e.to_string());
            return ExitCode::from(EXIT_DOMAIN);
        }
    };

    let flags = serde_json::to_value(&cli).expect("arguments serialize");
    let name = cli.command.name();
    let seed = cli.command.seed();
    let mut run = Run::new(&cli.global.out_prefix);
    let outcome = pool.install(|| execute(&cli, &mut run));
    let failure = outcome.as_ref().err().map(|e: &Error| (e.category(), e.to_string()));
    let manifest = run.finish(name, flags, seed, failure.as_ref().map(|(c, m)| format!("{c}: {m}")));

    match (failure, manifest) {
        (Some((category, message)), _) => {
            report_error(category, &message);
            ExitCode::from(EXIT_DOMAIN)
        }
        (None, Err(e)) => {
            report_error(e.category(), &e.to_string());
            ExitCode::from(EXIT_DOMAIN)
        }
        (None, Ok(path)) => {
            log::info!("manifest written to {}", path.display());
            ExitCode::SUCCESS
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    dispatch(std::env::args_os().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn messages_collapse_to_one_line() {
        assert_eq!(one_line("a\n  b\tc \n"), "a b c");
    }

    #[test]
    fn usage_errors_exit_two() {
        let argv = ["hsdemix", "detect", "--method", "mf"].map(Into::into).to_vec();
        assert_eq!(dispatch(argv), ExitCode::from(EXIT_USAGE));
    }
}
