//! Deterministic simulation of cooperative local SGD with dynamic
//! column-stochastic mixing, auxiliary variables and client selection,
//! together with a calculator for the matching convergence-error bounds.

pub mod bounds;
pub mod error;
pub mod harness;
pub mod matrix;
pub mod mixing;
pub mod objectives;
pub mod rng;
pub mod selection;
pub mod state;
pub mod trainer;

pub use error::{Error, Result};
pub use matrix::DenseMatrix;
pub use mixing::{MixingMatrix, MixingSchedule, ScheduleKind};
pub use objectives::{GradientOracle, Objective, QuadraticSuite};
pub use selection::{SelectionPolicy, SelectionSet};
pub use state::StateMatrix;
pub use trainer::{run, Algorithm, Engine, Init, RunConfig, RunTrace};
