//! Availability analysis of replicated services via Bayesian networks.
//!
//! A [`SystemModel`] describes infrastructure, network and host components,
//! their fault dependencies, where service instances run and which instance
//! combinations form a quorum. [`compiler`] turns it into a [`BayesNet`]
//! whose service node `S` is working exactly when the service is available;
//! [`inference`] computes `P(S = T)` exactly or by sampling, and [`oracle`]
//! evaluates the same quantity directly on the model.

pub mod bn;
pub mod compiler;
pub mod document;
pub mod error;
pub mod gates;
pub mod inference;
pub mod model;
pub mod oracle;
pub mod scenarios;

pub use bn::{BayesNet, Node, NodeRef};
pub use compiler::{compile, create_service_model, CompileOptions, Compiled, GateMode};
pub use document::{load_model, parse_model, to_json, ModelDocument};
pub use error::{Error, Result};
pub use inference::{availability, MarginalResult, Method};
pub use model::{
    Component, ComponentKind, FaultDependencyGraph, FaultTree, NetworkGraph, QuorumSpec,
    SystemModel, ValidationReport, Violation, ViolationKind,
};
