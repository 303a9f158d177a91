//! Configuration, coupling sweeps and output files.

pub mod config;
pub mod output;
pub mod sweep;

pub use config::{load_config, parse_config, ConfigError, EpsilonGrid, Format, RunConfig};
pub use output::{write_outputs, OutputError};
pub use sweep::{run_sweep, PipelineError, Prepared, SweepRow, SweepTable};
