//! Experiment harnesses: rate sweeps, moderate-deviation ratios, the exact
//! inequality suite, and the per-subcommand runners used by the CLI.

pub mod config;
pub mod ineq;
pub mod md;
pub mod rate;
pub mod record;
pub mod run;
pub mod svg;

pub use config::*;
pub use ineq::{ineq_suite, IneqRow, IneqSummary};
pub use md::{md_ratio_experiment, MdOutput, MdRow};
pub use rate::{fit_rate, rate_sweep, rate_sweep_points, RateFit, RatePoint, RateSweepOutput};
pub use record::{config_sha256, ExperimentRecord, SCHEMA_VERSION};
pub use run::{coord_cdf, run, Artifacts, SUBCOMMANDS};
