//! Secure near-field hybrid beamforming.
//!
//! A base station with a large uniform linear array serves a multi-antenna
//! user while a multi-antenna eavesdropper listens from a nearby location.
//! The crate builds spherical-wave (and planar-wave baseline) channels,
//! maximizes the secrecy capacity with a fully-digital beamformer, projects
//! that design onto a hybrid analog/digital architecture and runs seeded
//! Monte-Carlo experiments around the whole pipeline.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod numerics;
pub mod stage1;
pub mod stage2;

pub use error::{Error, Result};
pub use numerics::ComplexMatrix;
