//! Experiment runner: configuration, CSV tables, figure reproductions and
//! the validation suite used by the `flowmeter` binary.

pub mod config;
pub mod runs;
pub mod table;
pub mod validate;

pub use config::{ExperimentConfig, Mode};
pub use runs::{detect, estimate, run_fig2, run_fig3, run_fig4};
pub use table::{Cell, ResultTable};
pub use validate::{run_validate, Check, ValidationReport};
