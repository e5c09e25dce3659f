pub mod cli;
pub mod codec;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod identity;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod train;

pub use error::{Error, Result};
