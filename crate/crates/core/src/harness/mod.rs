//! Monte-Carlo experiment runner.

pub mod config;
pub mod emit;
pub mod stats;
pub mod sweep;

pub use config::{DetectorSpec, Format, SweepConfig};
pub use emit::{emit, read_csv, write_csv};
pub use stats::wilson;
pub use sweep::{run_sweep, se_prediction, PointRecord, SweepResult};
