//! The `kw` command line tool.

pub mod args;
pub mod commands;
pub mod error;
pub mod run_manifest;

pub use args::{Cli, Command};
pub use error::CliError;
pub use run_manifest::{manifest_path, RunManifest};

pub fn dispatch(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train_cmd(a),
        Command::Eval(a) => commands::eval(a),
        Command::Infer(a) => commands::infer(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Serve(a) => commands::serve(a),
        Command::Replay(a) => commands::replay(a),
    }
}
