//! Capacity and structure of linear operator channels over finite fields.

pub mod capacity;
pub mod channel;
pub mod classify;
pub mod error;
pub mod fixtures;
pub mod gf;
pub mod limits;
pub mod prob;
pub mod qcomb;
pub mod subspace;
pub mod verify;

pub use error::{Error, Result};
pub use gf::{Field, Matrix};
pub use limits::Limits;
pub use subspace::Subspace;
