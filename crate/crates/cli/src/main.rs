use std::process::ExitCode;

use clap::Parser;
use edl_cli::{configure_threads, exit_code, run, Cli, THREADS_ENV};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // --help and --version land here too
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let threads = std::env::var(THREADS_ENV).ok();
    if let Err(e) = configure_threads(threads.as_deref()).and_then(|()| run(&cli)) {
        eprintln!("error: {e}");
        return ExitCode::from(exit_code(&e));
    }
    ExitCode::SUCCESS
}
