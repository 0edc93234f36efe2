//! Two-stage stochastic multi-path TSP toolkit.
//!
//! The first stage picks a directed Hamiltonian tour; once a travel-time
//! scenario is revealed, the second stage picks the cheapest of the
//! alternative paths on every tour arc. The crate provides:
//!
//! - [`instance`], [`scenario`]: the multi-path network and its scenario pools,
//! - [`tour`], [`recourse`]: tour encodings, the exact recourse function and
//!   labelled training data,
//! - [`neural`]: a small feed-forward ReLU regressor trained with Adam,
//! - [`milp`], [`formulations`]: a solver-agnostic MILP representation, the
//!   deterministic equivalent, the network-embedded surrogate model and the
//!   deterministic approximation, with exact enumeration, 2-opt local search
//!   and LP-file export backends,
//! - [`evalreport`]: out-of-sample evaluation and experiment reports.

pub mod arcs;
pub mod error;
pub mod evalreport;
pub mod formulations;
pub mod instance;
pub mod milp;
pub mod neural;
pub mod provenance;
pub mod recourse;
pub mod rng;
pub mod scenario;
pub mod tour;

pub use arcs::ArcSpace;
pub use error::{Error, Result};
pub use instance::{CostTables, FirstStageRule, Instance};
pub use neural::{Network, TrainConfig};
pub use recourse::Dataset;
pub use scenario::ScenarioSet;
pub use tour::Tour;
