//! Gravity compensation for serial manipulators, learned from a small
//! number of measurements with knowledge distilled from a physics model.
//!
//! The crate is organised bottom-up: [`robot`] holds the rigid-body model,
//! [`plant`] the simulated arm with its unmodeled disturbances, [`teacher`]
//! the analytic prior, [`features`] and [`net`] the learning primitives,
//! [`learning`] the data sets and training loops, [`controller`] the
//! closed-loop compensation law and [`evaluation`] the experiments.

pub mod controller;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod learning;
pub mod net;
pub mod plant;
pub mod robot;
pub mod seed;
pub mod teacher;

pub use controller::{GccController, GccParams, OracleController, TeacherController, ZeroController};
pub use error::{Error, Result};
pub use evaluation::{CompensationPredictor, DriftReport, Method, RrmseReport};
pub use features::NormParams;
pub use learning::{CompensationModel, Dataset, Provenance, Sample, TrainHyper, TrainOutcome};
pub use plant::{DisturbanceParams, DriftDynParams, NoiseParams, Plant, TorquePolicy};
pub use robot::{JointKind, LinkParams, RobotModel};
pub use teacher::TeacherModel;
