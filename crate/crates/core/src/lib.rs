//! Current-flow group closeness maximization.
//!
//! Selects `k` nodes of an undirected graph maximizing `n / Tr(L_S^-1)`,
//! where `L_S` is the Laplacian with the group's rows and columns removed.
//! The samplers estimate everything they need from uniformly random rooted
//! spanning forests; dense oracles and simple baselines are included for
//! checking and comparison.

pub mod baselines;
mod engine;
pub mod error;
pub mod estimators;
pub mod exact;
pub mod forest;
pub mod generators;
pub mod graph;
pub mod greedy;
pub mod projector;
pub mod report;
pub mod schur;
pub mod stats;

pub use error::{CfcmError, Result};
pub use graph::{Graph, NodeSet};
pub use greedy::{maximize, Algorithm, RunConfig, SchurRoots, SelectionTrace};
