pub mod autograd;
pub mod correspondence;
pub mod decoders;
pub mod error;
pub mod grid;
pub mod harness;
pub mod interest;
pub mod losses;
pub mod nn;
pub mod stereonet;
pub mod synthgen;
pub mod teacher;
pub mod tensor;

pub use error::{Error, Result};
