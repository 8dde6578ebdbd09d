//! Command implementations behind the `curvemrf` binary.

pub mod args;
pub mod commands;
pub mod error;
pub mod serve;

pub use args::{Cli, Command};
pub use commands::run;
pub use error::{CliError, Result};

/// Caps rayon (and the server runtime) at `CURVEMRF_THREADS` when set.
pub fn thread_limit() -> Option<usize> {
    std::env::var("CURVEMRF_THREADS").ok()?.trim().parse().ok().filter(|&n| n > 0)
}
