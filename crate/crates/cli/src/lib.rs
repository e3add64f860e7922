//! Problem files, benchmark generators and the experiment runner for
//! asynchronous ADMM, on top of `asyncadmm-core`.
//!
//! The `asyncadmm` binary wraps these modules:
//!
//! ```text
//! asyncadmm run <config.toml> [--out DIR]
//! asyncadmm validate <config.toml>
//! asyncadmm bench <name> --graph <spec|file> --seeds a..b --T <int> --beta <float> --out <dir>
//! asyncadmm slope <csv> --column <name>
//! ```

pub mod bench;
pub mod config;
pub mod error;
pub mod experiment;
pub mod graph_file;
pub mod metrics;
pub mod problem_file;

pub use bench::{generate_benchmark, Benchmark, BenchmarkKind, BenchmarkSpec};
pub use config::{load_config, parse_config, render_config, ExperimentConfig};
pub use error::{CliError, Result};
pub use experiment::{prepare, run_experiment, Outcome, Summary};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "ASYNCADMM_OUTPUT_DIR";
