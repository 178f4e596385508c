//! `dynloss` command-line tool.

mod commands;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "dynloss", version, about = "Meta-learned dynamic loss for long-tailed noisy classification")]
struct Cli {
    /// Root for relative output paths.
    #[arg(long, global = true, env = "DYNLOSS_OUT", default_value = ".")]
    out_root: PathBuf,

    /// Log progress (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate (or corrupt) a dataset and write CSV plus provenance.
    GenData(commands::gen_data::GenDataArgs),
    /// Train a classifier and write metrics, checkpoints and a manifest.
    Train(Box<commands::train::TrainArgs>),
    /// Holdout accuracy of a checkpoint.
    Eval(commands::eval::EvalArgs),
    /// Corrector table, margins, corrected-label accuracy and clean-fraction estimates.
    Inspect(commands::inspect::InspectArgs),
    /// Meta-set dispersion of hierarchical vs naive sampling over several seeds.
    CompareSampling(commands::compare::CompareArgs),
}

/// Directory that relative output paths are resolved against.
#[derive(Debug, Clone)]
pub struct OutRoot {
    pub root: PathBuf,
}

impl OutRoot {
    pub fn resolve(&self, path: &std::path::Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.root.join(path)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let root = OutRoot { root: cli.out_root };
    let result = match cli.command {
        Command::GenData(args) => commands::gen_data::run(args, &root),
        Command::Train(args) => commands::train::run(*args, &root),
        Command::Eval(args) => commands::eval::run(args, &root),
        Command::Inspect(args) => commands::inspect::run(args, &root),
        Command::CompareSampling(args) => commands::compare::run(args, &root),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
