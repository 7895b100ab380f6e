//! Dynamics, control and learned torque feedforward for a 7-DOF
//! lower-extremity exoskeleton.

pub mod analysis;
pub mod anthropometry;
pub mod config;
pub mod control;
pub mod datagen;
pub mod dynamics;
pub mod error;
pub mod kinematics;
pub mod neuralnet;
pub mod pipeline;
pub mod plot;
pub mod simulation;
pub mod trajectory;

pub use error::{Error, Result};

/// Number of actuated joints.
pub const DOF: usize = 7;

/// One value per joint.
pub type JointVector = nalgebra::SVector<f64, DOF>;
