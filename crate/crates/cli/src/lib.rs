//! Command-line front end for `nlpflow`: argument types, value parsers and
//! the `run`, `multistart` and `list` commands.

pub mod args;
pub mod commands;
pub mod input;

pub use args::{Cli, Command};
pub use commands::{cmd_list, cmd_multistart, cmd_run, CliError, SCHEMA_VERSION};
pub use input::{parse_gains_json, parse_pts, parse_theta0, InputError};

/// Runs a parsed command line, writing reports to `stdout`. Returns the exit code.
pub fn execute(cli: &Cli, stdout: &mut impl std::io::Write) -> Result<i32, CliError> {
    match &cli.command {
        Command::Run(args) => cmd_run(args, stdout),
        Command::Multistart(args) => cmd_multistart(args, stdout),
        Command::List { json } => cmd_list(*json, stdout),
    }
}
