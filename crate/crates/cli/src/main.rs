mod args;
mod commands;
mod config;
mod io;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command, ScoreCommand};
use commands::Globals;
use config::FileConfig;
use io::{invalid, CliError};

fn run(cli: &Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    if let Some(jobs) = config.pick_opt(cli.jobs, "jobs")? {
        if jobs == 0 {
            return Err(CliError::Validation("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().map_err(invalid("--jobs"))?;
    }
    let orientation = config
        .pick(cli.orientation.clone(), "orientation", "standard".to_string())?
        .parse()
        .map_err(invalid("--orientation"))?;
    let lenient = cli.lenient || config.pick(None, "lenient", false)?;
    let g = Globals { config, orientation, lenient };

    match &cli.command {
        Command::Ingest(a) => commands::ingest(a, &g),
        Command::Dedup(a) => commands::dedup(a, &g),
        Command::Corrupt(a) => commands::corrupt(a, &g),
        Command::Sample(a) => commands::sample(a, &g),
        Command::Score(ScoreCommand::M2(a)) => commands::score_m2(a, &g),
        Command::Score(ScoreCommand::Cls(a)) => commands::score_cls(a, &g),
        Command::Stats(a) => commands::stats(a, &g),
        Command::Probe(a) => commands::probe(a, &g),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
