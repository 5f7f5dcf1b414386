//! Simulation and numerical certification toolkit for continuous-time
//! distributed stochastic gradient descent over switching directed graphs.
//!
//! A network of agents cooperatively minimizes the sum of local convex
//! objectives. Each agent sees only a Brownian-noise-corrupted gradient of
//! its own objective and the states of its current in-neighbors on a
//! time-varying directed graph. The crate simulates the resulting dynamics
//! with an Euler–Maruyama scheme, runs reproducible Monte Carlo ensembles,
//! and numerically certifies the consensus and convergence-rate behavior
//! the method is expected to show.
//!
//! Modules:
//! - [`graph`]: switching digraph schedules, Laplacians, transition matrices,
//!   window connectivity, geometric decay envelopes.
//! - [`objective`]: local objectives, global minimizer, region-scoped
//!   smoothness certificates.
//! - [`dynamics`]: step-size and noise models, the Euler–Maruyama stepper,
//!   single-path simulation.
//! - [`ensemble`]: reproducible parallel Monte Carlo runs and the stochastic
//!   integral isometry check.
//! - [`analysis`]: bound certification reports and convergence-rate fits.
//! - [`config`]: the on-disk experiment configuration format.
//!
//! All numerics are generic over the scalar type via [`scalar::Real`];
//! `f64` aliases for the main types are exported at the crate root.

pub mod analysis;
pub mod config;
pub mod dynamics;
pub mod ensemble;
pub mod graph;
pub mod linalg;
pub mod objective;
pub mod quadrature;
pub mod rng;
pub mod scalar;

pub use scalar::Real;

/// `f64` aliases for the common double-precision case.
pub type MatrixF64 = linalg::Matrix<f64>;
pub type DigraphF64 = graph::WeightedDigraph<f64>;
pub type ScheduleF64 = graph::GraphSchedule<f64>;
pub type ObjectiveSetF64 = objective::ObjectiveSet<f64>;
pub type SimConfigF64 = dynamics::SimConfig<f64>;
pub type TrajectoryF64 = dynamics::Trajectory<f64>;
pub type EnsembleStatsF64 = ensemble::EnsembleStats<f64>;
pub type BoundReportF64 = analysis::BoundReport<f64>;
pub type RateFitF64 = analysis::RateFit<f64>;
