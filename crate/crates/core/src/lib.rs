//! Core of the needle guidance middleware: rigid-body geometry, calibration
//! solvers, lag-compensating pose history, trajectory guidance, the binary
//! wire protocol, the synthetic tracking source and the JSON Lines recording
//! format.

pub mod calibration;
pub mod geometry;
pub mod guidance;
pub mod offline;
pub mod pose_history;
pub mod protocol;
pub mod recording;
pub mod simulator;

pub use geometry::{Handedness, Pose, Quat, Vec3};
