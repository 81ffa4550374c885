//! Preparation of Fock-state superpositions from a coherent cavity field by
//! dispersive atom-field interaction and atomic postselection in a Ramsey
//! interferometer.

pub mod analysis;
pub mod channel;
pub mod error;
pub mod experiment;
pub mod fock;
pub mod open_system;
pub mod optimizer;
pub mod validate;

pub use error::{Error, Result};
