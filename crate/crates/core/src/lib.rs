//! Distributed resilient state estimation for linear plants whose sensor
//! banks are partially compromised by sparse attacks.
//!
//! Each agent owns one sensor bank, runs a partial (Kalman-decomposed)
//! observer for the directions it sees, and fuses its neighbours' estimates
//! through a median-seeking consensus flow. The crate also provides
//! assumption audits, bounds and a fixed-step simulator.
//!
//! All numerical code is generic over [`Real`] (`f32` or `f64`); the
//! `*64` aliases below fix the scalar to `f64`.

// `!(x > 0)` style guards reject NaN on purpose, and the numeric kernels
// index several parallel buffers with one loop variable.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod estimator;
pub mod fixtures;
pub mod graph;
pub mod integrate;
pub mod linalg;
pub mod median;
pub mod observability;
pub mod scalar;
pub mod scenario;
pub mod sim;

pub use estimator::{
    plug_and_play_params, steady_state_bound, EstimatorConfig, EstimatorError, EstimatorNetwork, LyapunovData, Variant,
};
pub use graph::{algebraic_connectivity, laplacian, GraphError, Topology};
pub use median::{
    median_set, median_tracking_bound, run_median_solver, MedianError, MedianProblem, MedianRun, MedianSet,
};
pub use observability::{
    construct_shared_basis, ObservabilityError, ObserverBank, PartialObserver, PlantModel, SharedBasis,
};
pub use scalar::Real;
pub use scenario::{bundled, ScenarioError, ScenarioFile};
pub use sim::{
    audit_assumptions, run_scenario, tail_metrics, AttackKind, AttackProfile, AuditReport, InputSignal, RunOptions,
    ScenarioSpec, SimError, TrajectoryLog,
};

pub type PlantModel64 = PlantModel<f64>;
pub type SharedBasis64 = SharedBasis<f64>;
pub type ObserverBank64 = ObserverBank<f64>;
pub type EstimatorConfig64 = EstimatorConfig<f64>;
pub type ScenarioSpec64 = ScenarioSpec<f64>;
pub type TrajectoryLog64 = TrajectoryLog<f64>;
pub type MedianProblem64 = MedianProblem<f64>;
