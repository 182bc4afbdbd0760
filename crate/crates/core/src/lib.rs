//! Simulation and analysis toolkit for measurement-based quantum network coding.
//!
//! The crate is organised around a small number of engines:
//!
//! * [`graph`] tracks graph states at the adjacency level, together with the
//!   Pauli byproducts produced by measurements.
//! * [`dense`] is a brute-force state-vector / density-matrix simulator used
//!   both as an oracle for [`graph`] and as the noisy experiment backend.
//! * [`protocol`] drives the butterfly network code and teleportation over the
//!   resulting pairs.
//! * [`switch`] generalises the butterfly to a planar k×k non-blocking switch.
//! * [`topology`] compiles graph states onto hardware coupling maps using
//!   native CZs, local complementations and Y-measurement contractions.
//! * [`sampling`] provides seeded shot sampling, readout-error mitigation and
//!   post-selection.
//! * [`metrics`] computes fidelities, entanglement measures, tomography
//!   reconstructions and spherical-cap teleportation averages.

pub mod dense;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod pauli;
pub mod protocol;
pub mod sampling;
pub mod switch;
pub mod topology;

pub use dense::{Channel, DenseError, DenseState, MeasBasis, NoiseModel};
pub use graph::{GraphError, GraphState, MeasureOutcome};
pub use pauli::{Pauli, PauliString};
