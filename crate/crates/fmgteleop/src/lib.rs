//! Forearm force-myography (FMG) teleoperation toolkit.
//!
//! Maps 28-sensor FMG streams to 10 finger-joint angles with a
//! spatio-temporal convolutional regressor, benchmarks it against simpler
//! regressors, and drives a simulated multi-finger robot hand over a framed
//! real-time protocol.

pub mod config;
pub mod models;
pub mod nn;
pub mod retarget;
pub mod signal;
pub mod synth;
pub mod teleop;
pub mod train;
