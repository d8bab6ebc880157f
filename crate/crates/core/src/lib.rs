//! Latency-optimal placement of convolutional network layers onto a multi-hop
//! network of heterogeneous, resource-constrained compute units.
//!
//! The crate is `no_std` (with `alloc`). It contains the problem model, the
//! hop-distance topology, the latency objective and its feasibility rules,
//! the linearized integer program, three solvers and the seeded scenario
//! generator. File formats, the experiment harness and the CLI live in the
//! `layerplace` companion crate.
//!
//! Indices are zero-based throughout: CNN `u`, layer `j`, vertex `v`.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod fixtures;
pub mod latency;
pub mod linearize;
pub mod model;
pub mod scenario;
pub mod solver;
pub mod topology;

pub use latency::{
    check_feasibility, evaluate, EvalConventions, LatencyBreakdown, LatencyError, PayloadUnit, Placement,
    ProcessingWeight, Violation,
};
pub use linearize::{linearize, IlpModel, LinearizeOptions, SharingMode};
pub use model::{
    derive_exit_probabilities, validate_problem, CnnSpec, DeviceClass, GateProfile, LayerRef, LayerSpec,
    PlacementProblem, ProfileError, SharingGroup, ValidationError,
};
pub use solver::{solve, Method, Solution, SolveError, SolverConfig};
pub use topology::{Role, Topology, Vertex};
