//! Command implementations behind the `movrptw` binary.

pub mod args;
pub mod commands;
mod error;
pub mod files;
pub mod search;

pub use error::{CliError, CliResult};

use args::{Cli, Command, GlobalArgs};

/// Sizes the global worker pool: one thread when reproducible, `--jobs` otherwise.
fn configure_threads(global: &GlobalArgs) -> CliResult<()> {
    let threads = match (global.reproducible, global.jobs) {
        (true, _) => 1,
        (false, Some(0)) => return Err(CliError::Usage("--jobs must be at least 1".into())),
        (false, Some(n)) => n,
        (false, None) => return Ok(()),
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        log::debug!("worker pool already configured: {e}");
    }
    Ok(())
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let g = &cli.global;
    configure_threads(g)?;
    match &cli.command {
        Command::Gen(a) => commands::gen(a, g),
        Command::Train(a) => commands::train_command(a, g),
        Command::Sweep(a) => search::sweep(a),
        Command::Evolve(a) => search::evolve_command(a, g),
        Command::Pipeline(a) => search::pipeline(a, g),
        Command::Compare(a) => search::compare(a, g),
        Command::Eval(a) => commands::eval(a),
        Command::GradCheck(a) => commands::grad_check_command(a, g),
    }
}
