pub mod diffcore;
pub mod error;
mod layers;
pub mod manifold;
pub mod medmam;
pub mod runner;
pub mod semantics;
pub mod synth;
mod vecops;

pub use error::{Error, Result};
