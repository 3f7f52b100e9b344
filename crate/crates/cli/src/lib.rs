//! Command-line front end: scene generation, filter execution, training,
//! and evaluation reports.

pub mod commands;
pub mod error;
pub mod pipeline;
pub mod report;
pub mod settings;

pub use commands::{
    cmd_evaluate, cmd_run, cmd_simulate, cmd_train, parameter_report, EvalOutcome, EvaluateOptions,
    RunInput, RunOptions, RunOutcome, SimulateOptions, TrainCommand,
};
pub use error::{CliError, CliResult};
pub use pipeline::{Canceller, Method, Precision};
pub use settings::Settings;
