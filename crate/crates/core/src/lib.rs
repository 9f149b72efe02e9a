pub mod channel;
pub mod detect_schedule;
pub mod detector;
pub mod error;
pub mod est_bounds;
pub mod estimator;
pub mod harness;
pub mod numerics;

pub use error::{Error, Result};
