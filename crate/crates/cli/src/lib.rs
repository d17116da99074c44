//! Experiment configuration, studies and artifact I/O behind the `qsplan`
//! binary.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;
pub mod study;

pub use config::{ExperimentConfig, Preset};
pub use error::{CliError, CliResult};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "QSPLAN_THREADS";

/// Sizes the global worker pool from [`THREADS_ENV`]. Unset or unparsable
/// leaves the default; `1` runs everything serially.
pub fn init_threads() {
    let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) else {
        return;
    };
    // A pool already built, or one that fails to start, leaves work on the
    // current configuration; results do not depend on the thread count.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
}
