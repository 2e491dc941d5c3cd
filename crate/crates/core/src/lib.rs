//! Kinematic calibration of six-joint serial arms from cable-length
//! measurements.
//!
//! The crate is organized bottom-up: [`kinematics`] (DH transforms and the
//! parameter Jacobian), [`measurement`] (encoder model and datasets),
//! [`identify`] (eight base identifiers), [`ensemble`] (boosted
//! combination) and [`evaluate`] (metrics and comparison reports).

pub mod ensemble;
pub mod error;
pub mod evaluate;
pub mod identify;
pub mod kinematics;
pub mod measurement;

pub use error::{CalibError, Result};
