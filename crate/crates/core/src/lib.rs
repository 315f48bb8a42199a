//! Secret-key capacity of reciprocity-based key generation in TDD massive
//! MIMO, and design of the downlink training sequence that maximizes it.
//!
//! - [`channel`]: covariance models, spatial-mode bases, channel sampling.
//! - [`capacity`]: per-user capacity by three analytic routes and a Monte Carlo oracle.
//! - [`designer`]: water-filling and closed-form training designs.
//! - [`optimizer`]: projected-gradient maximization of sum / max-min criteria.

pub mod capacity;
pub mod channel;
pub mod designer;
pub mod error;
pub mod linalg;
pub mod matrix_io;
pub mod optimizer;
pub mod quadrature;
pub mod random;
pub mod rng;

pub use capacity::{CapacityReport, TrainingSequence};
pub use channel::{ArrayGeometry, Cluster, SpatialModeBasis, UserStatistics};
pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector, HermitianMatrix};
