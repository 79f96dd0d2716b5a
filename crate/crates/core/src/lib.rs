//! Finite-cardinality local hidden-variable models for network Bell
//! scenarios.
//!
//! A model assigns a distribution to every source and a response function
//! to every party; its behaviour is an exact finite sum over hidden-value
//! tuples. [`optimizer::fit`] searches for a model reproducing a target
//! behaviour by constrained least squares with random restarts, and
//! [`experiments`] builds visibility sweeps, slice grids and critical
//! visibility estimates on top of it.

// `!(x <= tol)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod behaviour;
pub mod contraction;
pub mod error;
pub mod experiments;
pub mod json;
pub mod model;
pub mod optimizer;
pub mod params;
mod solver;
pub mod targets;
pub mod topology;

/// Tolerance for simplex constraints on model arrays and parameter vectors.
pub const STRUCTURAL_TOL: f64 = 1e-12;
/// Tolerance for per-input normalization of behaviour tables.
pub const NORMALIZATION_TOL: f64 = 1e-9;

pub use behaviour::{load_behaviour, save_behaviour, Behaviour};
pub use contraction::evaluate_model;
pub use error::{Error, Result};
pub use model::{load_model, save_model, LocalModel, ResponseFunction, SourceDistribution, Violation};
pub use optimizer::{fit, FitResult, SolverSettings};
pub use params::{pack_parameters, project_feasible, unpack_parameters, ParameterLayout, ParameterVector};
pub use targets::FamilySpec;
pub use topology::{collins_gisin_dimension, load_topology, NetworkTopology};
