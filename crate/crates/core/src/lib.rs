pub mod error;
pub mod fft;
pub mod harness;
pub mod limitlaw;
pub mod medium;
pub mod oracle;
pub mod par;
pub mod quad;
pub mod randfield;
pub mod rng;
pub mod solver;
pub mod special;
pub mod theory;

pub use error::{Error, Result};
