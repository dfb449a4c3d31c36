mod args;

use std::io::ErrorKind;
use std::panic;
use std::process::ExitCode;

use clap::Parser;
use stabinf_core::pipeline::{self, PipelineConfig};
use stabinf_core::Error;

use args::{Cli, Command};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        Error::Io { source, .. } if source.kind() != ErrorKind::NotFound => EXIT_RUNTIME,
        _ => EXIT_DATA,
    }
}

fn load_config(cmd: &Command) -> Result<PipelineConfig, Error> {
    let opts = cmd.options();
    let mut config = match &opts.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    opts.apply(&mut config);
    config.validate()?;
    Ok(config)
}

fn run(cmd: &Command, config: &PipelineConfig) -> Result<serde_json::Value, Error> {
    match cmd {
        Command::Synth(_) => pipeline::cmd_synth(config),
        Command::Score(_) => pipeline::cmd_score(config),
        Command::Label(_) => pipeline::cmd_label(config),
        Command::Features(_) => pipeline::cmd_features(config),
        Command::Train(_) => pipeline::cmd_train(config),
        Command::Eval(_) => pipeline::cmd_eval(config),
        Command::Importance(_) => pipeline::cmd_importance(config),
        Command::Sweep(_) => pipeline::cmd_sweep(config),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let name = cli.command.name();
    let config = match load_config(&cli.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("stabinf {name}: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(config.workers).build();
    let pool = match pool {
        Ok(p) => p,
        Err(e) => {
            eprintln!("stabinf {name}: cannot start worker pool: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    let outcome = panic::catch_unwind(panic::AssertUnwindSafe(|| pool.install(|| run(&cli.command, &config))));
    match outcome {
        Ok(Ok(summary)) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Ok(Err(e)) => {
            eprintln!("stabinf {name}: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(_) => {
            eprintln!("stabinf {name}: internal failure");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
