//! Configuration and execution behind the `raretime` command.

pub mod config;
pub mod exec;

pub use config::{parse_model, Analysis, Format, RunConfig};
pub use exec::{execute, Outcome};

/// Process exit status for a finished run.
pub fn exit_code(result: &raretime::Result<Outcome>) -> i32 {
    match result {
        Ok(outcome) if outcome.failures.is_empty() => 0,
        Ok(_) => 2,
        Err(e) if e.is_resource_cap() => 3,
        Err(_) => 1,
    }
}
