//! Seeded Monte Carlo experiments over the hybrid designs in `hbf-core`:
//! experiment files, parallel trials with order-independent aggregation,
//! atomic CSV output, and the `hbf` command line.

pub mod cli;
pub mod error;
pub mod output;
pub mod run;
pub mod selftest;
pub mod spec;

pub use error::{HarnessError, Result};
pub use run::{run, RunSummary, SummaryRow};
pub use spec::ExperimentSpec;
