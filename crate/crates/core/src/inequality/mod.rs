//! Functional inequalities along the flow and their margins.

pub mod bank;
pub mod checks;
pub mod suite;

pub use bank::{TestFunction, TestFunctionBank};
pub use checks::{Coefficients, PairContext, PointCheck, StaticVariant};
pub use suite::{run_suite, SuiteConfig, SuiteResult};
