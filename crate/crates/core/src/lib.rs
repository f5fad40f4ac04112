//! Constructive majorizing measures on finite point sets.
//!
//! The crate builds partition trees and the probability measures they induce,
//! evaluates the `γ_{α,β}` functionals exactly for discrete measures, and checks
//! chaining inequalities against Monte Carlo estimates of Gaussian, Rademacher
//! and canonical process suprema.

pub mod battery;
pub mod bernoulli;
pub mod chain;
pub mod convex;
pub mod error;
pub mod function_class;
pub mod gamma;
pub mod gauge;
pub mod mc;
pub mod measure;
pub mod metric;
pub mod partition;
pub mod report;

pub use error::{Error, Result};
pub use gauge::GaugeOracle;
pub use measure::DiscreteMeasure;
pub use metric::{covering_number, diameter, distance, packing_eps, DistanceSpec, PointSet};
