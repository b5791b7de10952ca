//! Numerical laboratory for heat flows on time-dependent finite metric
//! measure spaces.
//!
//! The crate builds sampled-in-time Markov structures ([`flow`]), evaluates
//! their frozen-time square-field calculus ([`gamma`]), integrates the heat
//! and adjoint heat equations ([`propagator`]), computes optimal transport
//! quantities ([`transport`]) and measures the margins of a family of
//! gradient, Poincaré, log-Sobolev and Harnack inequalities ([`inequality`]).

pub mod cli;
pub mod config;
pub mod curvature;
pub mod error;
pub mod field;
pub mod flow;
pub mod gamma;
pub mod inequality;
pub mod propagator;
pub mod report;
pub mod scenario;
pub mod transport;
pub mod uniformization;

pub use error::{Error, Result};
pub use field::{Field, Measure, ProbabilityMeasure};
pub use flow::{build_circle1d, measure_at, validate_a1, FlowSpec, StateSpace, TimeGrid};
pub use gamma::GeneratorSnapshot;
