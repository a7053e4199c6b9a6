//! Simulator for distributed MIMO radar built from reconfigurable
//! holographic surfaces (RHS): waveguide and array models, the max-min
//! average-SINR amplitude optimizer, a phased-array baseline and an
//! experiment harness.

pub mod baseline;
pub mod bench;
pub mod draoa;
pub mod error;
pub mod rhs;
pub mod scenario;
pub mod sdp;
pub mod signal;

pub use error::{Error, Result};
