//! Self-organization of a thermal gas in the evanescent field of an optical
//! fiber: normal-phase stability, ordered branches, self-consistent stationary
//! fields, N-particle dynamics and the reduced field Hamiltonian.

pub mod branches;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod model;
pub mod numerics;
pub mod reduced_hamiltonian;
pub mod stability;
pub mod stationary;

pub use error::{Error, Result};
pub use model::{Params, PhysicalParams};
