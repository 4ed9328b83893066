//! Dynamic average consensus with state decomposition, an eavesdropping
//! observer that attacks it, a constructive privacy audit, and
//! consensus-driven formation control of unicycle robots.

pub mod adversary;
pub mod cli;
pub mod consensus;
pub mod error;
pub mod formation;
pub mod graph;
pub mod privacy;
pub mod rng;
pub mod signals;
pub mod sim;

pub use error::{Error, Result};
