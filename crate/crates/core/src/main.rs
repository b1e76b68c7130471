use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, Parser};

use chainsample::experiment::{run_experiment, ExperimentConfig, ExperimentKind, OUT_ENV};
use chainsample::Execution;

const EXIT_USAGE: u8 = 2;
const EXIT_FAILED: u8 = 3;

/// Run one experiment from a `key = value` config file.
#[derive(Parser, Debug)]
#[command(name = "chainsample", version)]
struct Cli {
    /// fit-duration | accuracy-sweep | decode-run | recovery-sim | chain-gen
    experiment: ExperimentKind,
    /// Config file; keys set here override --seed and --out.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = OUT_ENV)]
    out: Option<PathBuf>,
    /// Run trials on the calling thread only.
    #[arg(long)]
    sequential: bool,
}

fn usage(msg: &str) -> ExitCode {
    eprintln!("error: {msg}\n");
    eprintln!("{}", Cli::command().render_help());
    ExitCode::from(EXIT_USAGE)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(path) = cli.config else {
        return usage("--config is required");
    };
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => return usage(&format!("{}: {e}", path.display())),
    };
    // clap already folded the environment into `out`; the flag wins over it.
    let cfg = match ExperimentConfig::resolve(cli.experiment, &text, cli.seed, cli.out, None) {
        Ok(c) => c,
        Err(e) if e.is_config_error() && matches!(e, chainsample::experiment::ExperimentError::EmptyConfig) => {
            return usage(&format!("{}: config is empty", path.display()));
        }
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    match run_experiment(&cfg, exec) {
        Ok(report) => {
            // a closed stdout (e.g. piped into head) is not a run failure
            let mut stdout = io::stdout().lock();
            let _ = writeln!(stdout, "{}: {}", cfg.experiment, report.summary);
            for f in &report.files {
                let _ = writeln!(stdout, "  wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAILED)
        }
    }
}
