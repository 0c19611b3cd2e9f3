//! Robust energy-storage planning over sampled scenarios with
//! scenario-approach risk certificates.

// Validation compares with `!(x >= 0.0)` so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod error;
pub mod grid;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod rsp;
pub mod scenarios;

pub use error::{CoreError, Result};
pub use grid::NetworkCase;
pub use rsp::{FormulationKind, RobustSolution, StoragePlan};
pub use scenarios::{DailyScenario, ScenarioSet};
