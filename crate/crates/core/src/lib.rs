//! Virtual decomposition control of serial chains with second-order impedance
//! allocation, natural adaptation of inertial parameters, and a deterministic
//! closed-loop simulation harness.

pub mod adaptation;
pub mod allocator;
pub mod body;
pub mod chain;
pub mod controller;
pub mod error;
pub mod sim;
pub mod spatial;

pub use error::{Error, Result};
