//! Sequential experiment design: streaming estimators, confidence sequences,
//! precision-based stopping rules, group-sequential boundaries and a
//! reproducible Monte Carlo harness.

pub mod cli;
pub mod cs;
pub mod dgp;
pub mod error;
pub mod gst;
pub mod numerics;
pub mod rules;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use rules::{Monitor, Rule, RuleKind, StopReport, StoppingRuleSpec};
pub use stats::{Arm, ExperimentState};
