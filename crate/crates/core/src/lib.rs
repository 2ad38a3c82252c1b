//! Core-stable federated learning.
//!
//! Agents hold local datasets and measure a shared predictor `θ` through the
//! utility `uᵢ(θ) = Mᵢ − lossᵢ(θ)`. Maximizing the Nash welfare `Σ log uᵢ`
//! yields a core-stable predictor: no coalition `S` can find an alternative
//! that gives every member more than `n/|S|` times its current utility.
//!
//! * [`models`]: predictor families, losses and analytic gradients
//! * [`utility`]: caps, utilities and the Nash-welfare objective
//! * [`data`]: synthetic data, Dirichlet partitioning, noise, CSV I/O
//! * [`federation`]: FedAvg / CoreFed round simulation
//! * [`solver`]: centralized projected-gradient oracle
//! * [`audit`]: certificates, coalition search, pseudo-core radius

// NaN must fail range checks, so `!(x > 0.0)` is intentional.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audit;
pub mod data;
pub mod error;
pub mod federation;
pub mod models;
pub mod rng;
pub mod solver;
pub mod utility;

pub use audit::{Certificate, PseudoCoreParams, UtilityMatrix, Witness};
pub use data::PartitionPlan;
pub use error::{Error, Result};
pub use federation::{Aggregator, BatchSize, Checkpoint, ClientUpdate, RoundConfig, RoundRecord, TrainingTrace};
pub use models::{LabeledDataset, ModelKind, ModelSpec, Prediction, Predictor};
pub use solver::{Domain, SolveResult, SolverConfig};
pub use utility::{AgentProfile, NashObjective, UtilityConfig, ViolationPolicy};
