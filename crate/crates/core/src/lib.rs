//! Core library for a prepare-and-measure quantum-communication stack.

pub mod bits;
pub mod bounds;
pub mod crypto;
pub mod gc;
pub mod ecc;
pub mod hwsim;
pub mod protocols;
pub mod report;
pub mod transport;
