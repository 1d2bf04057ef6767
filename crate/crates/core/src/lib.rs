pub mod dataset;
mod error;
pub mod evallen;
pub mod evalseg;
pub mod geometry;
pub mod length;
pub mod maskops;
pub mod par;
pub mod synth;

pub use error::{Error, EXIT_INPUT, EXIT_NUMERICAL};
