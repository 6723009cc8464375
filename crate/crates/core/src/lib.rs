pub mod a2a;
pub mod automaton;
pub mod error;
pub mod freeze;
pub mod galil;
pub mod io;
pub mod random;
pub mod reductions;
pub mod strategy;

pub use error::{Error, Result};
