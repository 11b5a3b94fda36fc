pub mod bounds;
pub mod diffusion;
pub mod envelope;
pub mod kernels;
pub mod error;
pub mod quad;
pub mod sim;
pub mod special;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
